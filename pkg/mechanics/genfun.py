"""
Generation of Lagrangian submanifolds of a cotangent bundle by functions,
constrained functions and Morse families
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from mechanics.bundles import omega_Q
from mechanics.jetcalc import DomainError, ExpressionField, ReducedField
from utils.numerics import (
    DEFAULT_RANK_RTOL,
    ConvergenceError,
    SingularNewtonError,
    central_jacobian,
    newton_solve,
    nullspace,
    numerical_rank,
)

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


DEFAULT_CRITICAL_TOL = 1e-9


class CriticalityError(ValueError):
    """Raised when a witness fiber point is not critical or not of full rank"""


class ReductionRefused(ValueError):
    """Raised when a family reduction meets a singular eliminated block"""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


@dataclass(frozen=True, eq=False)
class GeneratedPoint:
    """Covector (q, p) of a generated set with its witness fiber values"""

    q: np.ndarray
    p: np.ndarray
    witness: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def as_array(self):
        return np.concatenate([self.q, self.p])


class MorseFamily:
    """Scalar family U(x; y) with base variables first and fiber variables last"""

    def __init__(self, base_dim, fiber_dim, U, fiber_domain=None, fiber_domain_name=None,
                 name=None, diagnostic=None):
        """
        Initialize a Morse family

        Args:
            base_dim (int): Number of base variables
            fiber_dim (int): Number of fiber variables
            U (ScalarField): Field of arity base_dim + fiber_dim
            fiber_domain (callable, optional): Predicate on the fiber values
            fiber_domain_name (str, optional): Label of the fiber predicate
            name (str, optional): Display name
            diagnostic (dict, optional): Provenance details (reductions)
        """
        if U.arity != base_dim + fiber_dim:
            raise ValueError(
                f"Family field arity {U.arity} does not match base {base_dim} + fiber {fiber_dim}"
            )
        self.base_dim = int(base_dim)
        self.fiber_dim = int(fiber_dim)
        self.U = U
        self.fiber_domain = fiber_domain
        self.fiber_domain_name = fiber_domain_name or 'fiber domain'
        self.name = name or U.name
        self.diagnostic = diagnostic or {}

    def __repr__(self):
        return f"MorseFamily(name={self.name!r}, base_dim={self.base_dim}, fiber_dim={self.fiber_dim})"

    def point(self, x, y):
        """Concatenate base and fiber values"""
        return np.concatenate([np.asarray(x, dtype=float).reshape(-1),
                               np.asarray(y, dtype=float).reshape(-1)])

    def fiber_admissible(self, y):
        if self.fiber_domain is None:
            return True
        return bool(self.fiber_domain(np.asarray(y, dtype=float)))

    def check_fiber(self, y):
        if not self.fiber_admissible(y):
            raise DomainError(self.fiber_domain_name, y, detail=f"family '{self.name}'")

    def value(self, x, y):
        return self.U.evaluate(self.point(x, y))

    def jet(self, x, y, order=2):
        return self.U.jet(self.point(x, y), order=order)

    def fiber_gradient(self, x, y):
        """dU/dy at (x, y)"""
        return self.jet(x, y, order=1).gradient[self.base_dim:]

    def rank_block(self, x, y):
        """
        Second-derivative block [d2U/dy dy | d2U/dy dx]

        Returns:
            np.ndarray: Matrix of shape (k, k + m)
        """
        H = self.jet(x, y, order=2).hessian
        m = self.base_dim
        return np.hstack([H[m:, m:], H[m:, :m]])


class ConstrainedGenerator:
    """Energy restricted to the zero set of constraint functions on Q"""

    def __init__(self, constraints, energy, name=None):
        """
        Initialize a constrained generator

        Args:
            constraints (list): ScalarFields F_A on Q
            energy (ScalarField): Energy function on Q
            name (str, optional): Display name
        """
        self.constraints = list(constraints)
        self.energy = energy
        self.name = name or energy.name
        for F in self.constraints:
            if F.arity != energy.arity:
                raise ValueError(f"Constraint '{F.name}' arity {F.arity} differs from energy arity {energy.arity}")

    @property
    def m(self):
        return self.energy.arity

    def constraint_jacobian(self, q):
        """Rows grad F_A(q)"""
        if not self.constraints:
            return np.zeros((0, self.m))
        return np.vstack([F.jet(q, order=1).gradient for F in self.constraints])

    def as_family(self):
        """The linear Morse family U = energy + sum_A F_A y^A"""
        m, k = self.m, len(self.constraints)
        energy, constraints = self.energy, self.constraints

        def family(z):
            q, y = z[:m], z[m:]
            total = energy(*q)
            for A in range(k):
                total = total + constraints[A](*q) * y[A]
            return total

        return MorseFamily(m, k, ExpressionField(family, m + k, name=f"family({self.name})"),
                           name=f"family({self.name})")


def trivial_family(U, name=None):
    """Morse family with no fiber variables"""
    return MorseFamily(U.arity, 0, U, name=name or U.name)


def generate_from_function(U, q):
    """
    Covector generated by a function on Q: p = grad U(q)

    Args:
        U (ScalarField): Generating function
        q (array-like): Configuration

    Returns:
        GeneratedPoint: (q, grad U(q)) with an empty witness

    Raises:
        DomainError: q outside U's domain
    """
    q = np.asarray(q, dtype=float)
    return GeneratedPoint(q, U.jet(q, order=1).gradient)


def constrained_residual(gen, q, p, lam):
    """
    Residual of the constrained generation equations

    Args:
        gen (ConstrainedGenerator): Generator
        q (array-like): Configuration
        p (array-like): Covector
        lam (array-like): Multipliers, one per constraint

    Returns:
        np.ndarray: F_A(q) stacked over p - grad U(q) - lam^A grad F_A(q)
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    values = np.array([F.evaluate(q) for F in gen.constraints])
    force = p - gen.energy.jet(q, order=1).gradient
    if gen.constraints:
        force = force - gen.constraint_jacobian(q).T @ lam
    return np.concatenate([values, force])


def morse_rank_ok(fam, q, y, rtol=DEFAULT_RANK_RTOL):
    """
    Maximal-rank test of a Morse family at a point

    Args:
        fam (MorseFamily): Family
        q (array-like): Base point
        y (array-like): Fiber point
        rtol (float): Relative singular value threshold

    Returns:
        tuple: (ok, rank) where ok means rank equals the fiber dimension
    """
    if fam.fiber_dim == 0:
        return True, 0
    rank, _ = numerical_rank(fam.rank_block(q, y), rtol)
    return rank == fam.fiber_dim, rank


def solve_critical_fiber(fam, q, seeds, tol=1e-12, max_iter=50, least_squares=False,
                         dedupe_tol=1e-8):
    """
    Newton search for critical fiber points dU/dy = 0 above a base point

    Args:
        fam (MorseFamily): Family
        q (array-like): Base point
        seeds (array-like or list): One fiber seed or a list of seeds
        tol (float): Tolerance on |dU/dy|
        max_iter (int): Newton iteration limit
        least_squares (bool): Take minimum-norm steps on singular fiber Hessians
        dedupe_tol (float): Distance under which two solutions are merged

    Returns:
        list: Critical fiber points found, in seed order; empty when every seed diverges

    Raises:
        DomainError: A seed outside the fiber domain
        SingularNewtonError: Singular fiber Hessian and least_squares is False
    """
    q = np.asarray(q, dtype=float)
    if fam.fiber_dim == 0:
        return [np.zeros(0)]
    seed_array = np.asarray(seeds, dtype=float)
    if seed_array.ndim == 1:
        seed_array = seed_array.reshape(1, -1)
    m = fam.base_dim

    def residual(y):
        return fam.jet(q, y, order=1).gradient[m:]

    def jacobian(y):
        return fam.jet(q, y, order=2).hessian[m:, m:]

    found = []
    for seed in seed_array:
        fam.check_fiber(seed)
        try:
            y, iterations = newton_solve(residual, jacobian, seed, tol=tol, max_iter=max_iter,
                                         least_squares=least_squares)
        except ConvergenceError:
            logger.warning(f"No critical point of '{fam.name}' from seed {seed}")
            continue
        if not fam.fiber_admissible(y):
            logger.warning(f"Critical point {y} of '{fam.name}' lies outside the fiber domain")
            continue
        if any(np.max(np.abs(y - other)) <= dedupe_tol for other in found):
            continue
        found.append(y)
    return found


def generated_covector(fam, q, y, tol=DEFAULT_CRITICAL_TOL, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Covector generated at a critical fiber point: p = dU/dq(q, y)

    Args:
        fam (MorseFamily): Family
        q (array-like): Base point
        y (array-like): Witness fiber point
        tol (float): Criticality tolerance on |dU/dy|
        rank_rtol (float): Relative threshold of the rank test

    Returns:
        GeneratedPoint: (q, p, y)

    Raises:
        CriticalityError: |dU/dy| > tol or the rank condition fails at (q, y)
    """
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    j = fam.jet(q, y, order=2)
    m = fam.base_dim
    fiber_grad = j.gradient[m:]
    if fiber_grad.size and np.max(np.abs(fiber_grad)) > tol:
        error_msg = (
            f"Fiber point {y} is not critical for '{fam.name}': "
            f"max |dU/dy| = {np.max(np.abs(fiber_grad)):.3e} > {tol:.1e}"
        )
        logger.error(error_msg)
        raise CriticalityError(error_msg)
    ok, rank = morse_rank_ok(fam, q, y, rank_rtol)
    if not ok:
        error_msg = f"Rank condition fails for '{fam.name}' at {y}: rank {rank} < {fam.fiber_dim}"
        logger.error(error_msg)
        raise CriticalityError(error_msg)
    return GeneratedPoint(q, j.gradient[:m], y)


def lagrange_bracket_max(surface, samples, h=1e-6):
    """
    Largest Lagrange bracket of a parametrized surface in T*Q

    Args:
        surface (callable): Map t -> (q, p), t a parameter vector
        samples (iterable): Parameter points
        h (float): Finite-difference step

    Returns:
        float: max over samples and index pairs of |dp/dt_a . dq/dt_b - dp/dt_b . dq/dt_a|
    """
    worst = 0.0
    for t in samples:
        t = np.atleast_1d(np.asarray(t, dtype=float))

        def flat(s):
            q, p = surface(s)
            return np.concatenate([np.asarray(q, dtype=float), np.asarray(p, dtype=float)])

        J = central_jacobian(flat, t, h)
        m = J.shape[0] // 2
        Jq, Jp = J[:m], J[m:]
        brackets = Jp.T @ Jq - Jq.T @ Jp
        worst = max(worst, float(np.max(np.abs(brackets))) if brackets.size else 0.0)
    return worst


def generated_isotropy(fam, q, y, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Isotropy defect of the generated set at a generated point

    Tangent vectors of the zero set of (p - dU/dq, dU/dy) over (q, p, y) are
    projected to (dq, dp) and omega_Q is evaluated on every pair.

    Args:
        fam (MorseFamily): Family
        q (array-like): Base point
        y (array-like): Witness fiber point

    Returns:
        float: Largest |omega_Q| over pairs of basis tangent vectors
    """
    m, k = fam.base_dim, fam.fiber_dim
    H = fam.jet(q, y, order=2).hessian
    top = np.hstack([-H[:m, :m], np.eye(m), -H[:m, m:]])
    bottom = np.hstack([H[m:, :m], np.zeros((k, m)), H[m:, m:]])
    basis = nullspace(np.vstack([top, bottom]), rank_rtol)
    tangents = basis[:2 * m].T
    worst = 0.0
    for i in range(len(tangents)):
        for j in range(i + 1, len(tangents)):
            worst = max(worst, abs(omega_Q(tangents[i], tangents[j])))
    return worst


def reduce_family(fam, eliminate, anchor_base, anchor_fiber, seed_rule=None, tol=1e-12,
                  max_iter=50, fiber_domain=None, fiber_domain_name=None, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Eliminate fiber variables of a Morse family at their stationary values

    Only local regularity at the anchor is checked; whether the stationary
    block is a global section is not decided (diagnostic scope 'local-only').

    Args:
        fam (MorseFamily): Family to reduce
        eliminate (list): Fiber indices (0-based within the fiber) to eliminate
        anchor_base (array-like): Base point of the anchor
        anchor_fiber (array-like): Full fiber point of the anchor; its eliminated
            entries seed the anchor solve
        seed_rule (callable, optional): Map from (base, remaining fiber) to a seed
            for the eliminated block
        tol (float): Newton tolerance
        max_iter (int): Newton iteration limit
        fiber_domain (callable, optional): Predicate on the remaining fiber
        fiber_domain_name (str, optional): Label of that predicate
        rank_rtol (float): Relative threshold of the block rank test

    Returns:
        MorseFamily: Family over the remaining fiber variables

    Raises:
        ReductionRefused: Eliminated block singular (or unsolvable) at the anchor
    """
    eliminate = sorted(int(i) for i in eliminate)
    if not eliminate:
        return fam
    if any(i < 0 or i >= fam.fiber_dim for i in eliminate):
        raise ValueError(f"Fiber indices {eliminate} out of range for fiber dimension {fam.fiber_dim}")

    m = fam.base_dim
    parent_elim = [m + i for i in eliminate]
    anchor_fiber = np.asarray(anchor_fiber, dtype=float).reshape(-1)
    remaining = [i for i in range(fam.fiber_dim) if i not in set(eliminate)]
    anchor_kept = np.concatenate([np.asarray(anchor_base, dtype=float).reshape(-1), anchor_fiber[remaining]])

    reduced = ReducedField(fam.U, parent_elim, seed_rule=seed_rule,
                           anchor_seed=anchor_fiber[eliminate], tol=tol, max_iter=max_iter,
                           name=f"reduced({fam.name})")
    diagnostic = {'scope': 'local-only', 'eliminated': eliminate, 'family': fam.name}
    try:
        full = reduced.solve(anchor_kept)
    except (SingularNewtonError, ConvergenceError, DomainError) as e:
        diagnostic['reason'] = str(e)
        error_msg = f"Reduction of '{fam.name}' refused: no stationary block at the anchor ({str(e)})"
        logger.error(error_msg)
        raise ReductionRefused(error_msg, diagnostic)

    H = fam.U.jet(full, order=2).hessian
    block = H[np.ix_(parent_elim, parent_elim)]
    rank, sv = numerical_rank(block, rank_rtol)
    diagnostic['anchor_block_rank'] = rank
    diagnostic['anchor_singular_values'] = [float(s) for s in sv]
    if rank < len(eliminate):
        error_msg = (
            f"Reduction of '{fam.name}' refused: eliminated block has rank {rank} "
            f"< {len(eliminate)} at the anchor"
        )
        logger.error(error_msg)
        raise ReductionRefused(error_msg, diagnostic)

    logger.info(f"Reduced '{fam.name}' by eliminating fiber indices {eliminate} (local-only)")
    return MorseFamily(m, len(remaining), reduced, fiber_domain=fiber_domain,
                       fiber_domain_name=fiber_domain_name, name=reduced.name, diagnostic=diagnostic)
