"""
Fast (hyperregular) and slow (energy-family) Legendre transformations
"""

import logging

import numpy as np

from mechanics.bundles import CotangentPoint, PhaseVelocity
from mechanics.dynamics import DiracSystem, MultiplierDomain, family_residual
from mechanics.genfun import MorseFamily, reduce_family
from mechanics.jetcalc import ExpressionField
from utils.numerics import ConvergenceError, NumericalFailure, SingularNewtonError, newton_solve

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


HYPERREGULAR_THRESHOLD = 1e-10
GRAPH_TOL = 1e-8


class LegendreInversionError(NumericalFailure):
    """Raised when the Legendre map cannot be inverted from a seed"""


class OffGraphError(ValueError):
    """Raised when a point is not on the graph of the Legendre map"""


class EnergyFamily(MorseFamily):
    """
    Energy family E(q, p; y, v) = p . v - L(q, v, y) over T*Q

    The fiber is ordered (y, v). The block d2E/dv dp is the identity, so the
    rank condition holds for every Lagrangian.
    """

    def __init__(self, source):
        """
        Initialize the energy family of a Lagrangian system

        Args:
            source (LagrangianSystem): Lagrangian or Lagrangian family
        """
        m, k = source.m, source.fiber_dim
        L = source.L

        def energy(z):
            q, p, y, v = z[:m], z[m:2 * m], z[2 * m:2 * m + k], z[2 * m + k:]
            total = -L(*q, *v, *y)
            for i in range(m):
                total = total + p[i] * v[i]
            return total

        def guard(z):
            q, y, v = z[:m], z[2 * m:2 * m + k], z[2 * m + k:]
            return L.admissible(np.concatenate([q, v, y]))

        U = ExpressionField(energy, 2 * m + k + m, guard=guard, guard_name=L.guard_name,
                            name=f"E[{source.name}]")
        fiber_domain = None
        if source.fiber_domain is not None:
            def fiber_domain(fiber):
                return bool(source.fiber_domain(fiber[:k]))
        super().__init__(2 * m, k + m, U, fiber_domain=fiber_domain,
                         fiber_domain_name=source.fiber_domain_name, name=f"E[{source.name}]")
        self.source = source
        self.family_indices = list(range(k))
        self.velocity_indices = list(range(k, k + m))


def _check_plain(sys, operation):
    if sys.is_family:
        raise ValueError(f"{operation} needs a plain Lagrangian, '{sys.name}' is a family")


def legendre_map(sys, x, y=None):
    """
    Legendre map (q, qdot) -> (q, dL/dqdot)

    Args:
        sys (LagrangianSystem): Lagrangian
        x (TangentPoint): (q, qdot)
        y (array-like, optional): Fiber witness for Lagrangian families

    Returns:
        CotangentPoint: (q, p)
    """
    m = sys.m
    grad = sys.L.jet(sys.point(x.q, x.v, y), order=1).gradient
    return CotangentPoint(x.q, grad[m:2 * m])


def velocity_hessian(sys, q, qdot):
    """d2L/dqdot dqdot at (q, qdot)"""
    m = sys.m
    H = sys.L.jet(np.concatenate([q, qdot]), order=2).hessian
    return H[m:, m:]


def hyperregular_probe(sys, samples, threshold=HYPERREGULAR_THRESHOLD):
    """
    Sample-based regularity probe of the Legendre map

    A necessary local probe, never a global diffeomorphism claim.

    Args:
        sys (LagrangianSystem): Plain Lagrangian
        samples (list): TangentPoints in the Lagrangian's domain
        threshold (float): |det| at or below which a sample counts as singular

    Returns:
        dict: verdict, samples, singular_samples, min_abs_det, max_abs_det, dets
    """
    _check_plain(sys, 'hyperregular_probe')
    dets = np.array([np.linalg.det(velocity_hessian(sys, x.q, x.v)) for x in samples])
    abs_dets = np.abs(dets)
    singular = int(np.sum(abs_dets <= threshold))
    n = len(samples)
    verdict = f"regular at {n} samples" if singular == 0 else f"singular at {singular} of {n} samples"
    logger.info(f"Hyperregularity probe of '{sys.name}': {verdict}")
    return {
        'verdict': verdict,
        'regular': singular == 0,
        'samples': n,
        'singular_samples': singular,
        'min_abs_det': float(abs_dets.min()) if n else None,
        'max_abs_det': float(abs_dets.max()) if n else None,
        'dets': dets,
    }


def classical_hamiltonian(sys, x, seed, tol=1e-12, max_iter=50):
    """
    Hamiltonian p . theta(q, p) - L(q, theta(q, p)) by Newton inversion

    Args:
        sys (LagrangianSystem): Plain Lagrangian
        x (CotangentPoint): (q, p)
        seed (array-like): Velocity seed
        tol (float): Newton tolerance
        max_iter (int): Newton iteration limit

    Returns:
        tuple: (H value, velocity theta(q, p))

    Raises:
        LegendreInversionError: Newton fails to invert the Legendre map
    """
    _check_plain(sys, 'classical_hamiltonian')
    m = sys.m
    q, p = x.q, x.p

    def residual(v):
        return sys.L.jet(np.concatenate([q, v]), order=1).gradient[m:] - p

    def jacobian(v):
        return velocity_hessian(sys, q, v)

    try:
        theta, _ = newton_solve(residual, jacobian, np.asarray(seed, dtype=float), tol=tol, max_iter=max_iter)
    except (SingularNewtonError, ConvergenceError) as e:
        error_msg = f"Legendre map of '{sys.name}' not invertible at p={p} from seed {seed}: {str(e)}"
        logger.error(error_msg)
        raise LegendreInversionError(error_msg)
    value = float(p @ theta) - sys.L.evaluate(np.concatenate([q, theta]))
    return value, theta


def slow_legendre(sys):
    """
    Energy family of a Lagrangian system

    No regularity is required of the Lagrangian.

    Args:
        sys (LagrangianSystem): Lagrangian or Lagrangian family

    Returns:
        EnergyFamily: E(q, p; y, v) = p . v - L(q, v, y)
    """
    fam = EnergyFamily(sys)
    logger.info(f"Energy family built for '{sys.name}' with fiber dimension {fam.fiber_dim}")
    return fam


def reduce_energy_family(fam, eliminate, anchor_base, anchor_fiber, seed_rule=None,
                         fiber_domain=None, fiber_domain_name=None, tol=1e-12):
    """
    Eliminate velocity variables of an energy family

    Args:
        fam (EnergyFamily): Energy family
        eliminate (list): Velocity indices (0..m-1) to eliminate
        anchor_base (array-like): Anchor covector (q, p)
        anchor_fiber (array-like): Anchor fiber point (y, v)
        seed_rule (callable, optional): Map from (q, p, remaining fiber) to a seed
            for the eliminated velocities
        fiber_domain (callable, optional): Predicate on the remaining fiber
        fiber_domain_name (str, optional): Label of that predicate
        tol (float): Newton tolerance

    Returns:
        MorseFamily: Hamiltonian Morse family over the remaining fiber

    Raises:
        ReductionRefused: Eliminated block singular at the anchor
    """
    indices = [fam.velocity_indices[i] for i in eliminate]
    return reduce_family(fam, indices, anchor_base, anchor_fiber, seed_rule=seed_rule, tol=tol,
                         fiber_domain=fiber_domain, fiber_domain_name=fiber_domain_name)


def dirac_from_linear_family(fam, samples=None, domains=None, reference=None, tol=1e-9, name=None):
    """
    Lift a family linear in its fiber to a Dirac system

    With reference fiber y0, Phi_A(x) = U(x, y0 + e_A) - U(x, y0) and
    H(x) = U(x, y0) - y0 . Phi(x).

    Args:
        fam (MorseFamily): Family over T*Q
        samples (list, optional): (x, y) pairs where linearity is checked
        domains (list, optional): MultiplierDomain per fiber variable (default free)
        reference (array-like, optional): Reference fiber point y0 (default zero)
        tol (float): Linearity tolerance
        name (str, optional): Display name

    Returns:
        DiracSystem: Base Hamiltonian, constraints and multiplier domains

    Raises:
        ValueError: The family is not linear in its fiber at a sample
    """
    n, k = fam.base_dim, fam.fiber_dim
    U = fam.U
    y0 = np.zeros(k) if reference is None else np.asarray(reference, dtype=float)

    def constraint(A):
        y1 = y0.copy()
        y1[A] += 1.0
        return ExpressionField(lambda z: U(*z, *y1) - U(*z, *y0), n, name=f"Phi{A}[{fam.name}]")

    constraints = [constraint(A) for A in range(k)]

    def base(z):
        total = U(*z, *y0)
        for A in range(k):
            if y0[A] != 0.0:
                total = total - y0[A] * constraints[A](*z)
        return total

    base_H = ExpressionField(base, n, name=f"H[{fam.name}]")

    for x, y in samples or []:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        linear = base_H.evaluate(x) + sum(y[A] * constraints[A].evaluate(x) for A in range(k))
        actual = fam.value(x, y)
        if abs(actual - linear) > tol * max(1.0, abs(actual)):
            error_msg = f"Family '{fam.name}' is not linear in its fiber at y={y}: gap {abs(actual - linear):.3e}"
            logger.error(error_msg)
            raise ValueError(error_msg)

    domains = domains if domains is not None else [MultiplierDomain.free()] * k
    return DiracSystem(base_H, constraints, domains, n // 2, name=name or f"dirac[{fam.name}]")


def dirac_hamiltonian_on_graph(sys, q, p, qdot, y=None, tol=GRAPH_TOL):
    """
    Energy p . qdot - L on the graph of the Legendre map

    On the graph dE/dqdot = p - dL/dqdot vanishes, so the value does not
    depend on which velocity over the covector is used.

    Args:
        sys (LagrangianSystem): Lagrangian
        q, p, qdot (array-like): Graph point
        y (array-like, optional): Fiber witness for Lagrangian families
        tol (float): Graph membership tolerance

    Returns:
        float: Energy value

    Raises:
        OffGraphError: |p - dL/dqdot| > tol
    """
    m = sys.m
    q, p, qdot = (np.asarray(v, dtype=float) for v in (q, p, qdot))
    j = sys.L.jet(sys.point(q, qdot, y), order=1)
    gap = p - j.gradient[m:2 * m]
    if np.max(np.abs(gap)) > tol:
        error_msg = f"Point is off the Legendre graph of '{sys.name}': max |dE/dqdot| = {np.max(np.abs(gap)):.3e}"
        logger.error(error_msg)
        raise OffGraphError(error_msg)
    return float(p @ qdot) - j.value


def dirac_hamiltonian_spread(sys, graph_points, tol=GRAPH_TOL):
    """
    Spread of the graph energy over points sharing one covector

    A value-consistency flag for well-definedness, not a proof.

    Args:
        sys (LagrangianSystem): Lagrangian
        graph_points (list): (q, qdot) pairs (or (q, qdot, y) for families)
        tol (float): Tolerance on covector agreement

    Returns:
        float: max - min of the energy values

    Raises:
        OffGraphError: The points do not share one covector
    """
    values, covectors = [], []
    m = sys.m
    for point in graph_points:
        q, qdot = point[0], point[1]
        y = point[2] if len(point) > 2 else None
        p = sys.L.jet(sys.point(q, qdot, y), order=1).gradient[m:2 * m]
        covectors.append(np.concatenate([np.asarray(q, dtype=float), p]))
        values.append(dirac_hamiltonian_on_graph(sys, q, p, qdot, y, tol=tol))
    covectors = np.array(covectors)
    if len(covectors) and np.max(np.abs(covectors - covectors[0])) > tol:
        error_msg = "Graph points do not share a covector"
        logger.error(error_msg)
        raise OffGraphError(error_msg)
    return float(max(values) - min(values)) if values else 0.0


def slow_dynamics_gap(source, target, tangent_points):
    """
    How far the Lagrange data of one Lagrangian is from the dynamics
    generated by the energy family of another

    Args:
        source (LagrangianSystem): Plain Lagrangian providing p = dL/dqdot, pdot = dL/dq
        target (LagrangianSystem): Plain Lagrangian whose energy family is tested
        tangent_points (list): TangentPoints in both domains

    Returns:
        np.ndarray: Residual norm per point (witness v = qdot)
    """
    _check_plain(source, 'slow_dynamics_gap')
    _check_plain(target, 'slow_dynamics_gap')
    fam = slow_legendre(target)
    m = source.m
    gaps = []
    for x in tangent_points:
        grad = source.L.jet(np.concatenate([x.q, x.v]), order=1).gradient
        z = PhaseVelocity(x.q, grad[m:], x.v, grad[:m])
        gaps.append(family_residual(fam, z, x.v).norm)
    return np.array(gaps)
