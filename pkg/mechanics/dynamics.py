"""
Implicit dynamics as subsets of TT*Q: Lagrangian, Hamiltonian, Dirac and
Morse-family sources exposed as residual operators
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from mechanics.bundles import PhaseVelocity, dT_omega
from mechanics.genfun import MorseFamily
from mechanics.jetcalc import ExpressionField, constant_field
from utils.numerics import DEFAULT_RANK_RTOL, central_jacobian, nullspace

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


ON_SET_TOL = 1e-8
CHECK_STEP = 1e-6


class MultiplierDomainError(ValueError):
    """Raised when a multiplier lies outside its declared domain"""


class OffDynamicsError(ValueError):
    """Raised when a point expected on a dynamics set is not on it"""


class MultiplierDomain:
    """Admissible values of one multiplier: positive, free, or fixed at one"""

    KINDS = ('positive', 'free', 'unit')

    def __init__(self, kind):
        if kind not in self.KINDS:
            raise ValueError(f"Unknown multiplier domain '{kind}'. Expected one of: {', '.join(self.KINDS)}")
        self.kind = kind

    def __repr__(self):
        return f"MultiplierDomain({self.kind!r})"

    def __eq__(self, other):
        return isinstance(other, MultiplierDomain) and other.kind == self.kind

    def __hash__(self):
        return hash(self.kind)

    @classmethod
    def positive(cls):
        return cls('positive')

    @classmethod
    def free(cls):
        return cls('free')

    @classmethod
    def unit(cls):
        return cls('unit')

    def contains(self, value):
        value = float(value)
        if not np.isfinite(value):
            return False
        if self.kind == 'positive':
            return value > 0.0
        if self.kind == 'unit':
            return value == 1.0
        return True

    def describe(self):
        return {'positive': 'v > 0', 'free': 'v in R', 'unit': 'v = 1'}[self.kind]


@dataclass(frozen=True, eq=False)
class DynamicsResidual:
    """Stacked residual of the defining equations and the witness used"""

    values: np.ndarray
    witness: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def norm(self):
        """Largest absolute residual entry"""
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


class LagrangianSystem:
    """Lagrangian L(q, qdot) or Lagrangian Morse family L(q, qdot; y)"""

    def __init__(self, L, m, fiber_dim=0, fiber_domain=None, fiber_domain_name=None, name=None):
        """
        Initialize a Lagrangian system

        Args:
            L (ScalarField): Field over (q, qdot) or (q, qdot, y)
            m (int): Configuration dimension
            fiber_dim (int): Number of family variables y
            fiber_domain (callable, optional): Predicate on y
            fiber_domain_name (str, optional): Label of that predicate
            name (str, optional): Display name
        """
        if L.arity != 2 * m + fiber_dim:
            raise ValueError(f"Lagrangian arity {L.arity} does not match 2m + k = {2 * m + fiber_dim}")
        self.L = L
        self.m = int(m)
        self.fiber_dim = int(fiber_dim)
        self.fiber_domain = fiber_domain
        self.fiber_domain_name = fiber_domain_name or 'fiber domain'
        self.name = name or L.name

    def __repr__(self):
        return f"LagrangianSystem(name={self.name!r}, m={self.m}, fiber_dim={self.fiber_dim})"

    @property
    def is_family(self):
        return self.fiber_dim > 0

    def as_family(self):
        """The Lagrangian as a Morse family over TQ"""
        return MorseFamily(2 * self.m, self.fiber_dim, self.L, fiber_domain=self.fiber_domain,
                           fiber_domain_name=self.fiber_domain_name, name=self.name)

    def point(self, q, qdot, y=None):
        parts = [np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)]
        if self.fiber_dim:
            if y is None:
                raise ValueError(f"Lagrangian family '{self.name}' needs a fiber witness y")
            y = np.asarray(y, dtype=float).reshape(-1)
            if self.fiber_domain is not None and not self.fiber_domain(y):
                raise MultiplierDomainError(f"Fiber witness {y} violates {self.fiber_domain_name}")
            parts.append(y)
        return np.concatenate(parts)


class HamiltonianSystem:
    """Hamiltonian H(q, p)"""

    def __init__(self, H, m, name=None):
        if H.arity != 2 * m:
            raise ValueError(f"Hamiltonian arity {H.arity} does not match 2m = {2 * m}")
        self.H = H
        self.m = int(m)
        self.name = name or H.name

    def __repr__(self):
        return f"HamiltonianSystem(name={self.name!r}, m={self.m})"

    def as_dirac(self):
        """The same dynamics as a Dirac system without constraints"""
        return DiracSystem(self.H, [], [], self.m, name=self.name)


class DiracSystem:
    """
    Base Hamiltonian plus multiplier-weighted constraints

    The dynamics is generated by the family H + v^A Phi_A:
    Phi_A = 0, qdot = dH/dp + v^A dPhi_A/dp, pdot = -dH/dq - v^A dPhi_A/dq.
    """

    def __init__(self, base_H, constraints, domains, m, name=None, excluded=None):
        """
        Initialize a Dirac system

        Args:
            base_H (ScalarField or None): Base Hamiltonian (None means zero)
            constraints (list): Constraint fields Phi_A over (q, p)
            domains (list): One MultiplierDomain per constraint
            m (int): Configuration dimension
            name (str, optional): Display name
            excluded (callable, optional): Predicate on (q, p) marking excluded points
        """
        self.m = int(m)
        self.base_H = base_H if base_H is not None else constant_field(0.0, 2 * m, name='0')
        self.constraints = list(constraints)
        self.domains = [d if isinstance(d, MultiplierDomain) else MultiplierDomain(d) for d in domains]
        if len(self.domains) != len(self.constraints):
            raise ValueError(f"{len(self.constraints)} constraints but {len(self.domains)} multiplier domains")
        for f in [self.base_H] + self.constraints:
            if f.arity != 2 * m:
                raise ValueError(f"Field '{f.name}' arity {f.arity} does not match 2m = {2 * m}")
        self.name = name or 'dirac'
        self.excluded = excluded

    def __repr__(self):
        return f"DiracSystem(name={self.name!r}, m={self.m}, constraints={len(self.constraints)})"

    @property
    def n_multipliers(self):
        return len(self.constraints)

    def check_multipliers(self, v):
        """
        Validate multiplier values against their domains

        Raises:
            MultiplierDomainError: Wrong count or a value outside its domain
        """
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != self.n_multipliers:
            raise MultiplierDomainError(f"Expected {self.n_multipliers} multipliers, got {v.size}")
        for A, (value, domain) in enumerate(zip(v, self.domains)):
            if not domain.contains(value):
                error_msg = f"Multiplier v[{A}] = {value} outside its domain ({domain.describe()})"
                logger.error(error_msg)
                raise MultiplierDomainError(error_msg)
        return v

    def constraint_values(self, x):
        return np.array([phi.evaluate(x) for phi in self.constraints])

    def vector_field(self, x, v):
        """
        (qdot, pdot) of the multiplier-fixed Hamiltonian H + v . Phi

        Args:
            x (np.ndarray): Point (q, p)
            v (np.ndarray): Multipliers

        Returns:
            tuple: (qdot, pdot)
        """
        m = self.m
        grad = self.base_H.jet(x, order=1).gradient.copy()
        for value, phi in zip(v, self.constraints):
            grad = grad + value * phi.jet(x, order=1).gradient
        return grad[m:], -grad[:m]

    def family(self):
        """The generating Hamiltonian Morse family H + v^A Phi_A over T*Q"""
        k = self.n_multipliers
        n = 2 * self.m
        base_H, constraints, domains = self.base_H, self.constraints, self.domains

        def energy(z):
            x, v = z[:n], z[n:]
            total = base_H(*x)
            for A in range(k):
                total = total + v[A] * constraints[A](*x)
            return total

        def fiber_domain(v):
            return all(d.contains(value) for d, value in zip(domains, v))

        return MorseFamily(n, k, ExpressionField(energy, n + k, name=f"family({self.name})"),
                           fiber_domain=fiber_domain, fiber_domain_name='multiplier domains',
                           name=f"family({self.name})")


def _phase_array(z):
    return z.as_array() if isinstance(z, PhaseVelocity) else np.asarray(z, dtype=float)


def lagrange_residual(sys, z, y=None, pdot_sign=1.0):
    """
    Residual of the Lagrange equations at a phase velocity

    Args:
        sys (LagrangianSystem): Plain Lagrangian or Lagrangian family
        z (PhaseVelocity): (q, p, qdot, pdot)
        y (array-like, optional): Fiber witness for families
        pdot_sign (float): Sign in front of dL/dq; -1 gives the deliberately wrong dynamics

    Returns:
        DynamicsResidual: pdot - dL/dq, p - dL/dqdot and (families) dL/dy

    Raises:
        DomainError: (q, qdot, y) outside the Lagrangian's domain
    """
    m = sys.m
    grad = sys.L.jet(sys.point(z.q, z.qdot, y), order=1).gradient
    blocks = [z.pdot - pdot_sign * grad[:m], z.p - grad[m:2 * m]]
    if sys.is_family:
        blocks.append(grad[2 * m:])
    witness = np.zeros(0) if y is None else np.asarray(y, dtype=float).reshape(-1)
    return DynamicsResidual(np.concatenate(blocks), witness)


def euler_lagrange_residual(sys, a):
    """
    Euler-Lagrange residual on the second tangent bundle

    Args:
        sys (LagrangianSystem): Plain Lagrangian
        a (SecondTangent): (q, qdot, qddot)

    Returns:
        np.ndarray: d2L/dqdot dq . qdot + d2L/dqdot dqdot . qddot - dL/dq
    """
    if sys.is_family:
        raise ValueError("euler_lagrange_residual needs a plain Lagrangian")
    m = sys.m
    j = sys.L.jet(np.concatenate([a.q, a.qdot]), order=2)
    H = j.hessian
    return H[m:, :m] @ a.qdot + H[m:, m:] @ a.qddot - j.gradient[:m]


def prolonged_lagrange_residual(sys, a, pdata):
    """
    Residual of the prolonged Lagrange equations

    Args:
        sys (LagrangianSystem): Plain Lagrangian
        a (SecondTangent): (q, qdot, qddot)
        pdata (tuple): (p, pdot, pddot)

    Returns:
        np.ndarray: Four stacked groups of length m:
            pdot - dL/dq,
            p - dL/dqdot,
            pddot - (d2L/dq dq . qdot + d2L/dq dqdot . qddot),
            pdot - (d2L/dqdot dq . qdot + d2L/dqdot dqdot . qddot)
    """
    if sys.is_family:
        raise ValueError("prolonged_lagrange_residual needs a plain Lagrangian")
    m = sys.m
    p, pdot, pddot = (np.asarray(v, dtype=float) for v in pdata)
    j = sys.L.jet(np.concatenate([a.q, a.qdot]), order=2)
    H, g = j.hessian, j.gradient
    return np.concatenate([
        pdot - g[:m],
        p - g[m:],
        pddot - (H[:m, :m] @ a.qdot + H[:m, m:] @ a.qddot),
        pdot - (H[m:, :m] @ a.qdot + H[m:, m:] @ a.qddot),
    ])


def hamilton_field(sys, x):
    """
    Hamiltonian vector field at a covector

    Args:
        sys (HamiltonianSystem): Hamiltonian
        x (CotangentPoint): (q, p)

    Returns:
        PhaseVelocity: (q, p, dH/dp, -dH/dq)
    """
    m = sys.m
    grad = sys.H.jet(x.as_array(), order=1).gradient
    return PhaseVelocity(x.q, x.p, grad[m:], -grad[:m])


def hamilton_residual(sys, z):
    """Residual qdot - dH/dp, pdot + dH/dq of the Hamilton equations"""
    m = sys.m
    grad = sys.H.jet(np.concatenate([z.q, z.p]), order=1).gradient
    return DynamicsResidual(np.concatenate([z.qdot - grad[m:], z.pdot + grad[:m]]))


def dirac_residual(sys, z, v):
    """
    Residual of a Dirac system at a phase velocity

    Args:
        sys (DiracSystem): System
        z (PhaseVelocity): (q, p, qdot, pdot)
        v (array-like): Multipliers

    Returns:
        DynamicsResidual: Phi_A, qdot - dH/dp - v dPhi/dp, pdot + dH/dq + v dPhi/dq

    Raises:
        MultiplierDomainError: v outside the multiplier domains
    """
    v = sys.check_multipliers(v)
    x = np.concatenate([z.q, z.p])
    qdot, pdot = sys.vector_field(x, v)
    values = np.concatenate([sys.constraint_values(x), z.qdot - qdot, z.pdot - pdot])
    return DynamicsResidual(values, v)


def family_residual(fam, z, y):
    """
    Residual of the dynamics generated by a Hamiltonian Morse family over T*Q

    Args:
        fam (MorseFamily): Family with base (q, p)
        z (PhaseVelocity): (q, p, qdot, pdot)
        y (array-like): Fiber witness

    Returns:
        DynamicsResidual: qdot - dU/dp, pdot + dU/dq, dU/dy
    """
    m = fam.base_dim // 2
    y = np.asarray(y, dtype=float).reshape(-1)
    fam.check_fiber(y)
    grad = fam.jet(np.concatenate([z.q, z.p]), y, order=1).gradient
    values = np.concatenate([z.qdot - grad[m:2 * m], z.pdot + grad[:m], grad[2 * m:]])
    return DynamicsResidual(values, y)


def lagrange_dynamics(sys, pdot_sign=1.0):
    """Residual callable (z, witness) -> values for a Lagrangian system"""
    def residual(z, w):
        return lagrange_residual(sys, z, w if sys.is_family else None, pdot_sign=pdot_sign).values
    return residual


def hamilton_dynamics(sys):
    """Residual callable (z, witness) -> values for a Hamiltonian system"""
    def residual(z, w):
        return hamilton_residual(sys, z).values
    return residual


def dirac_dynamics(sys):
    """Residual callable (z, witness) -> values for a Dirac system"""
    def residual(z, w):
        return dirac_residual(sys, z, w).values
    return residual


def family_dynamics(fam):
    """Residual callable (z, witness) -> values for a Hamiltonian Morse family"""
    def residual(z, w):
        return family_residual(fam, z, w).values
    return residual


def lagrangian_check(residual_fn, z, witness=None, tol=ON_SET_TOL, h=CHECK_STEP,
                     rank_rtol=DEFAULT_RANK_RTOL, n_pairs=0, rng=None):
    """
    Isotropy defect of a dynamics set at one of its points

    Tangent vectors of the residual zero set over (q, p, qdot, pdot, witness)
    come from the SVD nullspace of a central-difference Jacobian; they are
    projected to the phase-velocity block and d_T omega is evaluated on pairs.

    Args:
        residual_fn (callable): Map (PhaseVelocity, witness) -> residual values
        z (PhaseVelocity): Point of the dynamics
        witness (array-like, optional): Fiber or multiplier values at z
        tol (float): Membership tolerance
        h (float): Finite-difference step
        rank_rtol (float): Relative threshold of the nullspace
        n_pairs (int): Extra random pairs of tangent combinations
        rng (np.random.Generator, optional): Source of the random pairs

    Returns:
        float: Largest |d_T omega| over the evaluated pairs

    Raises:
        OffDynamicsError: The residual at (z, witness) exceeds tol
    """
    witness = np.zeros(0) if witness is None else np.asarray(witness, dtype=float).reshape(-1)
    base = np.asarray(residual_fn(z, witness), dtype=float)
    norm = float(np.max(np.abs(base))) if base.size else 0.0
    if norm > tol:
        error_msg = f"Point is not on the dynamics: residual {norm:.3e} > {tol:.1e}"
        logger.error(error_msg)
        raise OffDynamicsError(error_msg)

    m = z.dim
    flat = np.concatenate([_phase_array(z), witness])

    def stacked(u):
        return residual_fn(PhaseVelocity.from_array(u[:4 * m]), u[4 * m:])

    J = central_jacobian(stacked, flat, h)
    tangents = nullspace(J, rank_rtol)[:4 * m].T

    worst = 0.0
    for i in range(len(tangents)):
        for j in range(i + 1, len(tangents)):
            worst = max(worst, abs(dT_omega(tangents[i], tangents[j])))
    if n_pairs and len(tangents) > 1:
        rng = rng if rng is not None else np.random.default_rng(0)
        for _ in range(n_pairs):
            c1, c2 = rng.standard_normal((2, len(tangents)))
            worst = max(worst, abs(dT_omega(c1 @ tangents, c2 @ tangents)))
    return worst
