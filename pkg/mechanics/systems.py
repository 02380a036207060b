"""
Catalog of worked mechanical systems, metric utilities and the statics
constitutive-set checks
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from mechanics import jetcalc as jc
from mechanics.bundles import CotangentPoint, TangentPoint
from mechanics.constraint_algo import ConstraintSet, HamiltonianFamily
from mechanics.dynamics import DiracSystem, HamiltonianSystem, LagrangianSystem, MultiplierDomain
from mechanics.genfun import (
    ConstrainedGenerator,
    GeneratedPoint,
    MorseFamily,
    constrained_residual,
    generate_from_function,
    generated_covector,
    reduce_family,
    solve_critical_fiber,
    trivial_family,
)
from mechanics.jetcalc import ExpressionField
from utils.numerics import DEFAULT_RANK_RTOL, numerical_rank
from utils.policy import ConfigError

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


SYSTEM_IDS = (
    'elastic-point', 'bead-circle', 'elastic-circle', 'em-3d', 'kaluza-5d',
    'relativistic', 'relativistic-5d', 'massless', 'two-particle',
)
STATICS_IDS = ('elastic-point', 'bead-circle', 'elastic-circle')

DEFAULT_PARAMS = {
    'elastic-point': {'k': 3.0},
    'bead-circle': {'k': 1.0, 'a': 1.0},
    'elastic-circle': {'k': 1.0, 'a': 1.0},
    'em-3d': {'m': 1.0, 'e': 1.0, 'B': 1.0},
    'kaluza-5d': {'m': 1.0, 'e': 1.0, 'B': 1.0},
    'relativistic': {'m': 1.0, 'e': 1.0, 'B': 0.0},
    'relativistic-5d': {'m': 1.0, 'e': 1.0, 'B': 0.0},
    'massless': {},
    'two-particle': {'m1': 1.0, 'm2': 2.0, 'V': 'quadratic', 'omega': 1.0, 'c': 0.0},
}


def _bilinear(M, a, b):
    """sum_ij M[i][j] a[i] b[j] over scalars or jets, skipping exact zeros"""
    total = 0.0
    for i, row in enumerate(M):
        for j, entry in enumerate(row):
            if isinstance(entry, (float, int, np.floating)) and entry == 0.0:
                continue
            total = total + entry * a[i] * b[j]
    return total


def _dot(a, b):
    total = 0.0
    for ai, bi in zip(a, b):
        total = total + ai * bi
    return total


class MetricSpec:
    """Metric tensor g(q) with its inverse, as functions on scalars or jets"""

    def __init__(self, dim, components, inverse_components=None, signature='user', name=None, constant=False):
        """
        Initialize a metric

        Args:
            dim (int): Dimension
            components (callable): Map q (list) -> nested dim x dim list of g_ij
            inverse_components (callable, optional): Map q -> nested list of g^ij
            signature (str): 'euclidean', 'minkowski' or 'user'
            name (str, optional): Display name
            constant (bool): True when the components do not depend on q
        """
        self.dim = int(dim)
        self.components = components
        self.inverse_components = inverse_components
        self.signature = signature
        self.name = name or signature
        self.constant = constant

    def __repr__(self):
        return f"MetricSpec(name={self.name!r}, dim={self.dim})"

    @classmethod
    def _constant(cls, matrix, signature, name):
        matrix = np.asarray(matrix, dtype=float)
        inverse = np.linalg.inv(matrix)
        rows = matrix.tolist()
        inverse_rows = inverse.tolist()
        return cls(matrix.shape[0], lambda q: rows, lambda q: inverse_rows, signature=signature,
                   name=name, constant=True)

    @classmethod
    def euclidean(cls, dim=3):
        return cls._constant(np.eye(dim), 'euclidean', f"euclidean-{dim}")

    @classmethod
    def minkowski(cls, dim=4):
        """Signature (+, -, -, -)"""
        return cls._constant(np.diag([1.0] + [-1.0] * (dim - 1)), 'minkowski', f"minkowski-{dim}")

    @classmethod
    def polar(cls):
        """Euclidean plane in polar coordinates (r, theta): diag(1, r^2)"""
        return cls(2, lambda q: [[1.0, 0.0], [0.0, q[0] * q[0]]],
                   lambda q: [[1.0, 0.0], [0.0, 1.0 / (q[0] * q[0])]], signature='euclidean', name='polar')

    @classmethod
    def user(cls, dim, components, inverse_components=None, name=None):
        return cls(dim, components, inverse_components, signature='user', name=name or 'user')

    def _coordinates(self, q):
        if q is None:
            if not self.constant:
                raise ValueError(f"Metric '{self.name}' depends on position; a point q is required")
            return None
        return [float(v) for v in np.asarray(q, dtype=float).reshape(-1)]

    def g(self, q):
        """Numeric metric matrix at q (q may be None for a constant metric)"""
        q = self._coordinates(q)
        return np.array([[float(entry) for entry in row] for row in self.components(q)])

    def inverse(self, q):
        """Numeric inverse metric at q (q may be None for a constant metric)"""
        if self.inverse_components is not None:
            q = self._coordinates(q)
            return np.array([[float(entry) for entry in row] for row in self.inverse_components(q)])
        return np.linalg.inv(self.g(q))

    def quadratic(self, q, a, b=None):
        """g(a, b) at q"""
        return _bilinear(self.components(q), a, a if b is None else b)

    def inverse_quadratic(self, q, a, b=None):
        """g^-1(a, b) at q"""
        if self.inverse_components is None:
            raise ValueError(f"Metric '{self.name}' has no inverse components for Hamiltonian constructions")
        return _bilinear(self.inverse_components(q), a, a if b is None else b)

    def component_field(self, i, j):
        return ExpressionField(lambda z: self.components(z)[i][j], self.dim, name=f"g{i}{j}")


def christoffel(metric, q, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Christoffel symbols of a metric

    Args:
        metric (MetricSpec): Metric
        q (array-like): Point
        rank_rtol (float): Relative threshold of the invertibility test

    Returns:
        np.ndarray: Gamma[j, k, l] = 1/2 g^ji (d_k g_li + d_l g_ki - d_i g_kl), symmetric in (k, l)

    Raises:
        ValueError: Metric singular at q
    """
    q = np.asarray(q, dtype=float)
    n = metric.dim
    g = metric.g(q)
    rank, _ = numerical_rank(g, rank_rtol)
    if rank < n:
        error_msg = f"Metric '{metric.name}' is singular at {q} (rank {rank} < {n})"
        logger.error(error_msg)
        raise ValueError(error_msg)
    g_inv = np.linalg.inv(g)
    dg = np.zeros((n, n, n))
    if not metric.constant:
        for i in range(n):
            for j in range(i, n):
                dg[i, j] = metric.component_field(i, j).jet(q, order=1).gradient
                dg[j, i] = dg[i, j]
    lowered = 0.5 * (np.einsum('lik->ikl', dg) + np.einsum('kil->ikl', dg) - np.einsum('kli->ikl', dg))
    gamma = np.einsum('ji,ikl->jkl', g_inv, lowered)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


class PolynomialGauge:
    """Gauge function chi(q) = c . q + 1/2 q.S.q + sum_i t_i q_i^3"""

    def __init__(self, c, S, t):
        self.c = np.asarray(c, dtype=float)
        S = np.asarray(S, dtype=float)
        self.S = 0.5 * (S + S.T)
        self.t = np.asarray(t, dtype=float)
        self.dim = self.c.size
        c, S, t, n = self.c, self.S, self.t, self.dim

        def chi(z):
            total = 0.0
            for i in range(n):
                total = total + c[i] * z[i] + t[i] * z[i] * z[i] * z[i]
                for j in range(n):
                    if S[i, j] != 0.0:
                        total = total + 0.5 * S[i, j] * z[i] * z[j]
            return total

        self.field = ExpressionField(chi, n, name='chi')

    @classmethod
    def random(cls, rng, dim):
        return cls(rng.normal(size=dim), rng.normal(size=(dim, dim)), rng.normal(scale=0.3, size=dim))

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        return self.c + self.S @ q + 3.0 * self.t * q * q

    def gradient_field(self, i):
        c, S, t, n = self.c, self.S, self.t, self.dim

        def component(z):
            total = c[i] + 3.0 * t[i] * z[i] * z[i]
            for j in range(n):
                if S[i, j] != 0.0:
                    total = total + S[i, j] * z[j]
            return total

        return ExpressionField(component, n, name=f"dchi{i}")


class EMFieldSpec:
    """Electromagnetic potentials phi, A on Q with charge e and mass m"""

    def __init__(self, dim, phi=None, A=None, e=1.0, m=1.0, name=None):
        self.dim = int(dim)
        self.phi = phi
        self.A = list(A) if A is not None else None
        self.e = float(e)
        self.m = float(m)
        self.name = name or 'em'

    def __repr__(self):
        return f"EMFieldSpec(name={self.name!r}, dim={self.dim}, e={self.e}, m={self.m})"

    @classmethod
    def none(cls, dim, e=1.0, m=1.0):
        return cls(dim, e=e, m=m, name='free')

    @classmethod
    def constant_magnetic(cls, B, e=1.0, m=1.0, dim=3, x_index=0, y_index=1):
        """A_x = -B y / 2, A_y = B x / 2, all other components zero"""
        B = float(B)
        if B == 0.0:
            return cls.none(dim, e=e, m=m)
        A = [jc.constant_field(0.0, dim) for _ in range(dim)]
        A[x_index] = ExpressionField(lambda z: -0.5 * B * z[y_index], dim, name='Ax')
        A[y_index] = ExpressionField(lambda z: 0.5 * B * z[x_index], dim, name='Ay')
        return cls(dim, A=A, e=e, m=m, name=f"constant-B({B:g})")

    def with_gauge(self, gauge):
        """Potential A + grad chi for a PolynomialGauge"""
        base = self.A if self.A is not None else [jc.constant_field(0.0, self.dim) for _ in range(self.dim)]
        A = [a + gauge.gradient_field(i) for i, a in enumerate(base)]
        return EMFieldSpec(self.dim, phi=self.phi, A=A, e=self.e, m=self.m, name=f"{self.name}+dchi")

    def potential(self, q):
        """A_i(q) as scalars or jets"""
        if self.A is None:
            return [0.0] * self.dim
        return [a(*q) for a in self.A]

    def scalar_potential(self, q):
        if self.phi is None:
            return 0.0
        return self.phi(*q)

    def A_value(self, q):
        return np.array([float(v) for v in self.potential([float(x) for x in q])])


class TwoParticleSpec:
    """Two relativistic particles in flat Minkowski space with potential V(r)"""

    def __init__(self, m1=1.0, m2=2.0, potential='quadratic', omega=1.0, constant=0.0):
        if potential not in ('quadratic', 'constant'):
            raise ConfigError(f"Unknown two-particle potential '{potential}'. Expected quadratic or constant")
        self.m1 = float(m1)
        self.m2 = float(m2)
        self.potential = potential
        self.omega = float(omega)
        self.constant = float(constant)
        self.metric = MetricSpec.minkowski(4)

    def __repr__(self):
        return f"TwoParticleSpec(m1={self.m1}, m2={self.m2}, potential={self.potential!r})"

    def V(self, r):
        if self.potential == 'constant':
            return self.constant + 0.0 * r
        return 0.5 * self.omega ** 2 * r * r

    def dV(self, r):
        if self.potential == 'constant':
            return 0.0
        return self.omega ** 2 * r

    def separation(self, q1, q2):
        """||q2 - q1|| = sqrt(-g(d, d)) for spacelike d"""
        d = [b - a for a, b in zip(q1, q2)]
        return jc.sqrt(-self.metric.quadratic(None, d))

    def mbar(self, r):
        return jc.sqrt(self.m1 ** 2 + self.V(r)), jc.sqrt(self.m2 ** 2 + self.V(r))

    def spacelike(self, q1, q2):
        d = np.asarray(q2, dtype=float) - np.asarray(q1, dtype=float)
        return float(d @ self.metric.g(None) @ d) < 0.0

    def bracket_closed_form(self, x):
        """{Phi_1, Phi_2} on C: V'(r) / (2 mbar1 mbar2 r) (p1 + p2) . (q2 - q1)"""
        x = np.asarray(x, dtype=float)
        q1, q2, p1, p2 = x[:4], x[4:8], x[8:12], x[12:]
        r = float(self.separation(list(q1), list(q2)))
        mb1, mb2 = (float(v) for v in self.mbar(r))
        return self.dV(r) / (2.0 * mb1 * mb2 * r) * float((p1 + p2) @ (q2 - q1))

    def ratio_closed_form(self, x):
        """alpha^2 / alpha^1 = mbar2 g^-1(P, p1) / (mbar1 g^-1(P, p2))"""
        x = np.asarray(x, dtype=float)
        q1, q2, p1, p2 = x[:4], x[4:8], x[8:12], x[12:]
        r = float(self.separation(list(q1), list(q2)))
        mb1, mb2 = (float(v) for v in self.mbar(r))
        g_inv = self.metric.inverse(None)
        P = p1 + p2
        return mb2 * float(P @ g_inv @ p1) / (mb1 * float(P @ g_inv @ p2))


@dataclass
class CatalogSystem:
    """A constructible worked example with everything the engine needs to exercise it"""

    id: str
    kind: str
    m: int
    params: dict
    lagrangian: LagrangianSystem = None
    dirac: DiracSystem = None
    hamiltonian: HamiltonianSystem = None
    family: HamiltonianFamily = None
    constraints: ConstraintSet = None
    generator: MorseFamily = None
    sampler: object = None
    tangent_sampler: object = None
    excluded: object = None
    metric: MetricSpec = None
    em: EMFieldSpec = None
    spec: object = None
    initial_state: np.ndarray = None
    default_gauge: str = 'unit'
    proper_time_block: slice = None
    energy_reduction: dict = None
    extras: dict = field(default_factory=dict)

    def __repr__(self):
        return f"CatalogSystem(id={self.id!r}, kind={self.kind!r}, m={self.m})"


def _resolve_params(system_id, params):
    defaults = DEFAULT_PARAMS[system_id]
    params = dict(params or {})
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise ConfigError(f"Unknown parameters for '{system_id}': {', '.join(unknown)}. "
                          f"Accepted: {', '.join(sorted(defaults)) or 'none'}")
    resolved = dict(defaults)
    for key, value in params.items():
        if isinstance(defaults[key], float):
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"Parameter '{key}' of '{system_id}' must be a number, got {value!r}")
        resolved[key] = value
    return resolved


# Statics

def build_elastic_point(k=3.0):
    """Internal energy k/2 (x^2 + y^2) of an elastically suspended point"""
    U = ExpressionField(lambda z: 0.5 * k * (z[0] * z[0] + z[1] * z[1]), 2, name='U_elastic')
    return trivial_family(U)


def build_bead_circle(k=1.0, a=1.0):
    """Energy k y on the circle x^2 + y^2 = a^2, as a constrained generator"""
    F = ExpressionField(lambda z: 0.5 * (z[0] * z[0] + z[1] * z[1] - a * a), 2, name='circle')
    energy = ExpressionField(lambda z: k * z[1], 2, name='U_bead')
    return ConstrainedGenerator([F], energy, name='bead-circle')


def build_elastic_circle(k=1.0, a=1.0):
    """Morse family k/2 ((x - a cos t)^2 + (y - a sin t)^2) with fiber variable t"""
    def energy(z):
        dx = z[0] - a * jc.cos(z[2])
        dy = z[1] - a * jc.sin(z[2])
        return 0.5 * k * (dx * dx + dy * dy)

    return MorseFamily(2, 1, ExpressionField(energy, 3, name='U_elastic_circle'), name='elastic-circle')


def statics_constitutive(example, point, params=None):
    """
    Constitutive set of the statics examples at an input point

    Args:
        example (int): 1 (elastic point), 2 (bead on a circle) or 3 (point tied to a circle)
        point (array-like): (x, y) for examples 1 and 3; (theta, lam) for example 2
        params (dict, optional): k and a overrides

    Returns:
        dict: covectors (list of GeneratedPoint) and residual (virtual-work residual
            for example 2, constrained-generation residual otherwise)

    Raises:
        ValueError: Unknown example or malformed point
    """
    params = params or {}
    point = np.asarray(point, dtype=float)
    if point.shape != (2,):
        raise ValueError(f"Statics input must have two entries, got shape {point.shape}")
    if example == 1:
        k = float(params.get('k', 3.0))
        fam = build_elastic_point(k)
        return {'covectors': [generate_from_function(fam.U, point)], 'residual': 0.0}
    if example == 2:
        k, a = float(params.get('k', 1.0)), float(params.get('a', 1.0))
        gen = build_bead_circle(k, a)
        theta, lam = point
        q = np.array([a * math.cos(theta), a * math.sin(theta)])
        p = np.array([lam * q[0], k + lam * q[1]])
        generation = float(np.max(np.abs(constrained_residual(gen, q, p, [lam]))))
        virtual_work = -p[0] * a * math.sin(theta) + p[1] * a * math.cos(theta) - k * a * math.cos(theta)
        return {'covectors': [GeneratedPoint(q, p, np.array([lam]))],
                'residual': max(generation, abs(virtual_work))}
    if example == 3:
        k, a = float(params.get('k', 1.0)), float(params.get('a', 1.0))
        fam = build_elastic_circle(k, a)
        base = math.atan2(point[1], point[0])
        found = solve_critical_fiber(fam, point, [[base], [base + math.pi]], least_squares=True)
        covectors = [generated_covector(fam, point, y) for y in found]
        return {'covectors': covectors, 'residual': 0.0}
    raise ValueError(f"Unknown statics example {example}. Expected 1, 2 or 3")


def elastic_circle_branches(x, y, k=1.0, a=1.0):
    """Closed-form forces kx/rho (rho -+ a), ky/rho (rho -+ a) of the two sections"""
    rho = math.hypot(x, y)
    return [(k * x / rho * (rho - a), k * y / rho * (rho - a)),
            (k * x / rho * (rho + a), k * y / rho * (rho + a))]


def singularity_jacobian(rho, theta):
    """Jacobian of (rho, theta) -> (rho cos theta, rho sin theta)"""
    return np.array([[math.cos(theta), math.sin(theta)],
                     [-rho * math.sin(theta), rho * math.cos(theta)]])


def singularity_scan(rho_grid, theta=0.3, rtol=DEFAULT_RANK_RTOL):
    """
    Rank profile of the base projection of the tied-point constitutive set

    The rank decision uses singular values relative to the largest one.

    Args:
        rho_grid (iterable): Values of rho
        theta (float): Angle at which the Jacobian is evaluated
        rtol (float): Relative singular value threshold

    Returns:
        list: One dict per grid point with rho, rank, singular_values and gap
            (smallest singular value over the threshold)
    """
    profile = []
    for rho in rho_grid:
        rank, sv = numerical_rank(singularity_jacobian(float(rho), theta), rtol)
        threshold = rtol * sv[0] if sv.size and sv[0] > 0 else rtol
        profile.append({
            'rho': float(rho),
            'rank': int(rank),
            'singular_values': [float(s) for s in sv],
            'gap': float(sv[-1] / threshold),
        })
    return profile


def _statics_system(system_id, params):
    if system_id == 'elastic-point':
        generator = build_elastic_point(params['k'])
        example = 1
    elif system_id == 'bead-circle':
        generator = build_bead_circle(params['k'], params['a']).as_family()
        example = 2
    else:
        generator = build_elastic_circle(params['k'], params['a'])
        example = 3

    def sampler(rng):
        if example == 2:
            return np.array([rng.uniform(-math.pi, math.pi), rng.normal()])
        t = rng.uniform(-math.pi, math.pi)
        return rng.uniform(0.3, 2.0) * np.array([math.cos(t), math.sin(t)])

    return CatalogSystem(system_id, 'statics', 2, params, generator=generator, sampler=sampler,
                         extras={'example': example})


# Dynamics: field constructors

def build_em_lagrangian(metric, em):
    """m/2 g(qdot, qdot) - e phi + e A . qdot"""
    n, m, e = metric.dim, em.m, em.e

    def lagrangian(z):
        q, v = z[:n], z[n:]
        return 0.5 * m * metric.quadratic(q, v) - e * em.scalar_potential(q) + e * _dot(em.potential(q), v)

    return LagrangianSystem(ExpressionField(lagrangian, 2 * n, name='L_em'), n, name='em')


def build_em_hamiltonian(metric, em):
    """1/(2m) g^-1(p - eA, p - eA) + e phi"""
    n, m, e = metric.dim, em.m, em.e

    def hamiltonian(z):
        q, p = z[:n], z[n:]
        pi = [pk - e * ak for pk, ak in zip(p, em.potential(q))]
        return metric.inverse_quadratic(q, pi) / (2.0 * m) + e * em.scalar_potential(q)

    return HamiltonianSystem(ExpressionField(hamiltonian, 2 * n, name='H_em'), n, name='em')


def build_kaluza(metric, em):
    """
    Gauge-independent charged particle on the extension (q0, q1..qn)

    Returns:
        tuple: (LagrangianSystem with the extra term e qdot0, DiracSystem H + v (p0 - e))
    """
    n, m, e = metric.dim, em.m, em.e
    N = n + 1

    def lagrangian(z):
        x, v0, v = z[1:N], z[N], z[N + 1:]
        return (0.5 * m * metric.quadratic(x, v) - e * em.scalar_potential(x)
                + e * _dot(em.potential(x), v) + e * v0)

    def base(z):
        x, p = z[1:N], z[N + 1:]
        pi = [pk - e * ak for pk, ak in zip(p, em.potential(x))]
        return metric.inverse_quadratic(x, pi) / (2.0 * m) + e * em.scalar_potential(x)

    L = LagrangianSystem(ExpressionField(lagrangian, 2 * N, name='L_kaluza'), N, name='kaluza')
    H = ExpressionField(base, 2 * N, name='H_kaluza')
    charge = ExpressionField(lambda z: z[N] - e, 2 * N, name='p0-e')
    return L, DiracSystem(H, [charge], [MultiplierDomain.free()], N, name='kaluza')


def _timelike_guard(metric, sl):
    def guard(z):
        v = list(z[sl])
        return metric.quadratic(None, v) > 0.0
    return guard


def build_relativistic_lagrangian(metric, em, sign=1.0, extra=False):
    """
    sign m sqrt(g(qdot, qdot)) + e A . qdot (plus e qdot0 on the extension)

    Args:
        metric (MetricSpec): Spacetime metric
        em (EMFieldSpec): Potentials on spacetime
        sign (float): +1 for the standard Lagrangian, -1 for its sign-reversed twin
        extra (bool): Add the charge coordinate q0 in front

    Returns:
        LagrangianSystem: Defined for timelike velocities
    """
    n, m, e = metric.dim, em.m, em.e
    off = 1 if extra else 0
    N = n + off

    def lagrangian(z):
        x, v = z[off:N], z[N + off:]
        value = sign * m * jc.sqrt(metric.quadratic(x, v)) + e * _dot(em.potential(x), v)
        if extra:
            value = value + e * z[N]
        return value

    guard = _timelike_guard(metric, slice(N + off, 2 * N))
    name = ('L_rel5' if extra else 'L_rel') + ('' if sign > 0 else '_minus')
    L = ExpressionField(lagrangian, 2 * N, guard=guard, guard_name='timelike velocity', name=name)
    return LagrangianSystem(L, N, name=name)


def relativistic_constraint(metric, em, offset=0, N=None):
    """sqrt(g^-1(p - eA, p - eA)) - m on the block starting at offset"""
    n, m, e = metric.dim, em.m, em.e
    N = N or n

    def phi(z):
        x, p = z[offset:offset + n], z[N + offset:N + offset + n]
        pi = [pk - e * ak for pk, ak in zip(p, em.potential(x))]
        return jc.sqrt(metric.inverse_quadratic(x, pi)) - m

    def guard(z):
        x = list(z[offset:offset + n])
        p = z[N + offset:N + offset + n]
        pi = [float(pk) - em.e * float(ak) for pk, ak in zip(p, em.potential(x))]
        return float(metric.inverse_quadratic(x, pi)) > 0.0

    return ExpressionField(phi, 2 * N, guard=guard, guard_name='timelike momentum', name='Phi_mass')


def build_relativistic_dirac(metric, em, extra=False):
    """v (sqrt(g^-1(pi, pi)) - m) with v > 0, plus v2 (p0 - e) on the extension"""
    n, e = metric.dim, em.e
    if not extra:
        return DiracSystem(None, [relativistic_constraint(metric, em)], [MultiplierDomain.positive()], n,
                           name='relativistic')
    N = n + 1
    charge = ExpressionField(lambda z: z[N] - e, 2 * N, name='p0-e')
    return DiracSystem(None, [relativistic_constraint(metric, em, offset=1, N=N), charge],
                       [MultiplierDomain.positive(), MultiplierDomain.free()], N, name='relativistic-5d')


def build_massless(metric):
    """
    Massless particle: Lagrangian family g(qdot, qdot) / (2y), y > 0, and the
    Dirac system v/2 g^-1(p, p), v > 0

    Returns:
        tuple: (LagrangianSystem family, DiracSystem)
    """
    n = metric.dim

    def lagrangian(z):
        q, v, y = z[:n], z[n:2 * n], z[2 * n]
        return metric.quadratic(q, v) / (2.0 * y)

    L = ExpressionField(lagrangian, 2 * n + 1, guard=lambda z: z[2 * n] > 0.0, guard_name='y > 0',
                        name='L_massless')
    sys_L = LagrangianSystem(L, n, fiber_dim=1, fiber_domain=lambda y: bool(y[0] > 0.0),
                             fiber_domain_name='y > 0', name='massless')
    phi = ExpressionField(lambda z: 0.5 * metric.inverse_quadratic(z[:n], z[n:]), 2 * n, name='Phi_null')
    return sys_L, DiracSystem(None, [phi], [MultiplierDomain.positive()], n, name='massless')


def build_hyperboloid_family(metric, em):
    """
    Morse family over T*Q with fiber (s, w, mu):
    (p - eA) . w - m sqrt(g(w, w)) + mu (g(w, w) - s^2), s > 0
    """
    n, m, e = metric.dim, em.m, em.e
    N = 2 * n

    def energy(z):
        q, p, s, w, mu = z[:n], z[n:N], z[N], z[N + 1:N + 1 + n], z[N + 1 + n]
        pi = [pk - e * ak for pk, ak in zip(p, em.potential(q))]
        gw = metric.quadratic(q, w)
        return _dot(pi, w) - m * jc.sqrt(gw) + mu * (gw - s * s)

    def guard(z):
        return float(metric.quadratic(None, list(z[N + 1:N + 1 + n]))) > 0.0

    U = ExpressionField(energy, N + n + 2, guard=guard, guard_name='timelike w', name='U_hyperboloid')
    return MorseFamily(N, n + 2, U, fiber_domain=lambda y: bool(y[0] > 0.0), fiber_domain_name='s > 0',
                       name='hyperboloid')


def hyperboloid_branch(metric, em, sign, anchor):
    """
    Eliminate (w, mu) from the hyperboloid family on one branch

    Seeds: w = sign s g^-1(pi) / ||pi||, mu = (m - sign ||pi||) / (2 s).

    Args:
        metric (MetricSpec): Spacetime metric
        em (EMFieldSpec): Potentials
        sign (float): +1 or -1
        anchor (array-like): Covector (q, p) with timelike p - eA

    Returns:
        MorseFamily: Family over T*Q with the single fiber variable s > 0
    """
    n, m, e = metric.dim, em.m, em.e
    fam = build_hyperboloid_family(metric, em)

    def seed_rule(kept):
        q, p, s = kept[:n], kept[n:2 * n], kept[2 * n]
        pi = p - e * em.A_value(q)
        g_inv = metric.inverse(q)
        norm = math.sqrt(float(pi @ g_inv @ pi))
        w = sign * s * (g_inv @ pi) / norm
        return np.concatenate([w, [(m - sign * norm) / (2.0 * s)]])

    anchor = np.asarray(anchor, dtype=float)
    anchor_fiber = np.concatenate([[1.0], seed_rule(np.concatenate([anchor, [1.0]]))])
    return reduce_family(fam, list(range(1, n + 2)), anchor, anchor_fiber, seed_rule=seed_rule,
                         fiber_domain=lambda y: bool(y[0] > 0.0), fiber_domain_name='s > 0')


def build_two_particle(spec):
    """
    Lagrangian mbar1 ||qdot1|| + mbar2 ||qdot2|| and the constraints
    ||p_i|| - mbar_i over T*(Q x Q)

    Returns:
        tuple: (LagrangianSystem, DiracSystem with positive multipliers, secondary field Psi)
    """
    g = spec.metric

    def r_of(q):
        return spec.separation(q[:4], q[4:8])

    def lagrangian(z):
        q, v = z[:8], z[8:]
        mb1, mb2 = spec.mbar(r_of(q))
        return mb1 * jc.sqrt(g.quadratic(None, v[:4])) + mb2 * jc.sqrt(g.quadratic(None, v[4:]))

    def lagrangian_guard(z):
        return (spec.spacelike(z[:4], z[4:8]) and float(g.quadratic(None, list(z[8:12]))) > 0.0
                and float(g.quadratic(None, list(z[12:16]))) > 0.0)

    def constraint(i):
        def phi(z):
            q, p = z[:8], z[8:]
            block = p[4 * i:4 * i + 4]
            return jc.sqrt(g.inverse_quadratic(None, block)) - spec.mbar(r_of(q))[i]

        def guard(z):
            block = list(z[8 + 4 * i:12 + 4 * i])
            return spec.spacelike(z[:4], z[4:8]) and float(g.inverse_quadratic(None, block)) > 0.0

        return ExpressionField(phi, 16, guard=guard, guard_name='timelike momenta, spacelike separation',
                               name=f"Phi{i + 1}")

    L = ExpressionField(lagrangian, 16, guard=lagrangian_guard,
                        guard_name='timelike velocities, spacelike separation', name='L_two')
    psi = ExpressionField(lambda z: _dot([a + b for a, b in zip(z[8:12], z[12:16])],
                                         [b - a for a, b in zip(z[:4], z[4:8])]), 16, name='Psi')
    sys_D = DiracSystem(None, [constraint(0), constraint(1)],
                        [MultiplierDomain.positive(), MultiplierDomain.positive()], 8, name='two-particle',
                        excluded=_two_particle_excluded)
    return LagrangianSystem(L, 8, name='two-particle'), sys_D, psi


def _two_particle_excluded(x):
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(x[8:12] + x[12:16]))) < 1e-6


def two_particle_prolongation_functions(sys_D, psi):
    """
    First-order two-particle equations on the tangent bundle of
    T*(Q x Q) x (alpha1, alpha2): Phi1, Phi2, Psi and xdot - alpha^i X_i(x)

    Returns:
        list: ScalarFields of arity 36 over (x, alpha, xdot, alphadot)
    """
    fam = HamiltonianFamily(sys_D.constraints, sys_D.domains, sys_D.m)
    X1 = fam.hamiltonian_field_components(0)
    X2 = fam.hamiltonian_field_components(1)
    functions = [ExpressionField(lambda z, f=f: f(*z[:16]), 36, name=f.name)
                 for f in list(sys_D.constraints) + [psi]]
    for j in range(16):
        functions.append(ExpressionField(
            lambda z, j=j: z[18 + j] - z[16] * X1[j](*z[:16]) - z[17] * X2[j](*z[:16]), 36, name=f"xdot{j}"))
    return functions


def two_particle_prolongation_point(sys_D, x, alpha):
    """Tangent point (x, alpha; X_alpha(x), 0) for the prolongation test"""
    x = np.asarray(x, dtype=float)
    qdot, pdot = sys_D.vector_field(x, alpha)
    return TangentPoint(np.concatenate([x, alpha]), np.concatenate([qdot, pdot, [0.0, 0.0]]))


# Samplers

def _timelike(rng, dim, mass, spread=0.5):
    k = rng.normal(scale=spread, size=dim - 1)
    return np.concatenate([[math.sqrt(mass ** 2 + float(k @ k))], k])


def _null(rng, dim, spread=1.0):
    k = rng.normal(scale=spread, size=dim - 1)
    return np.concatenate([[math.sqrt(float(k @ k))], k])


def _perturbed(rng, x, scale=0.02):
    return np.asarray(x, dtype=float) * (1.0 + scale * rng.normal(size=np.size(x)))


def build_system(system_id, params=None):
    """
    Construct a catalog system by identifier

    Args:
        system_id (str): One of SYSTEM_IDS
        params (dict, optional): Parameter overrides (see DEFAULT_PARAMS)

    Returns:
        CatalogSystem: Fully wired system

    Raises:
        ConfigError: Unknown identifier or parameter
    """
    if system_id not in SYSTEM_IDS:
        error_msg = f"Unknown system '{system_id}'. Expected one of: {', '.join(SYSTEM_IDS)}"
        logger.error(error_msg)
        raise ConfigError(error_msg)
    params = _resolve_params(system_id, params)
    if system_id in STATICS_IDS:
        system = _statics_system(system_id, params)
    else:
        system = _BUILDERS[system_id](params)
    logger.info(f"Built catalog system '{system_id}' with parameters {params}")
    return system


def _build_em(params):
    metric = MetricSpec.euclidean(3)
    em = EMFieldSpec.constant_magnetic(params['B'], e=params['e'], m=params['m'], dim=3)
    lag = build_em_lagrangian(metric, em)
    ham = build_em_hamiltonian(metric, em)
    dirac = ham.as_dirac()
    family = HamiltonianFamily([ham.H], [MultiplierDomain.unit()], 3)

    def sampler(rng):
        return np.concatenate([rng.uniform(-1, 1, 3), rng.normal(size=3)])

    def tangent_sampler(rng):
        return TangentPoint(rng.uniform(-1, 1, 3), rng.normal(size=3)), None

    m, e = params['m'], params['e']

    def seed_rule(kept):
        q, p = kept[:3], kept[3:6]
        return (p - e * em.A_value(q)) / m

    return CatalogSystem(
        'em-3d', 'dynamics', 3, params, lagrangian=lag, dirac=dirac, hamiltonian=ham, family=family,
        constraints=ConstraintSet(), sampler=sampler, tangent_sampler=tangent_sampler, metric=metric, em=em,
        initial_state=np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        energy_reduction={'eliminate': [0, 1, 2], 'seed_rule': seed_rule},
    )


def _build_kaluza(params):
    metric = MetricSpec.euclidean(3)
    em = EMFieldSpec.constant_magnetic(params['B'], e=params['e'], m=params['m'], dim=3)
    lag, dirac = build_kaluza(metric, em)
    family = HamiltonianFamily.from_dirac(dirac)
    e, m = params['e'], params['m']

    def sampler(rng):
        q = rng.uniform(-1, 1, 4)
        p = np.concatenate([[e + 0.1 * rng.normal()], rng.normal(size=3)])
        return np.concatenate([q, p])

    def tangent_sampler(rng):
        return TangentPoint(rng.uniform(-1, 1, 4), rng.normal(size=4)), None

    def seed_rule(kept):
        x, p = kept[1:4], kept[5:8]
        return (p - e * em.A_value(x)) / m

    return CatalogSystem(
        'kaluza-5d', 'dynamics', 4, params, lagrangian=lag, dirac=dirac, family=family,
        constraints=ConstraintSet(dirac.constraints), sampler=sampler, tangent_sampler=tangent_sampler,
        metric=metric, em=em, initial_state=np.array([0.0, 0.0, 0.0, 0.0, e, 1.0, 0.0, 0.0]),
        energy_reduction={'eliminate': [1, 2, 3], 'seed_rule': seed_rule, 'lift_reference': [0.0],
                          'lift_domains': [MultiplierDomain.free()]},
    )


def _build_relativistic(params):
    metric = MetricSpec.minkowski(4)
    em = EMFieldSpec.constant_magnetic(params['B'], e=params['e'], m=params['m'], dim=4, x_index=1, y_index=2)
    lag = build_relativistic_lagrangian(metric, em)
    dirac = build_relativistic_dirac(metric, em)
    family = HamiltonianFamily(dirac.constraints, dirac.domains, 4)
    m, e = params['m'], params['e']

    def sampler(rng):
        q = rng.uniform(-1, 1, 4)
        pi = _perturbed(rng, _timelike(rng, 4, m))
        return np.concatenate([q, pi + e * em.A_value(q)])

    def tangent_sampler(rng):
        return TangentPoint(rng.uniform(-1, 1, 4), rng.uniform(0.5, 2.0) * _timelike(rng, 4, 1.0)), None

    return CatalogSystem(
        'relativistic', 'dynamics', 4, params, lagrangian=lag, dirac=dirac, family=family,
        constraints=ConstraintSet(dirac.constraints), sampler=sampler, tangent_sampler=tangent_sampler,
        metric=metric, em=em, initial_state=np.array([0.0, 0.0, 0.0, 0.0, m, 0.0, 0.0, 0.0]),
        proper_time_block=slice(0, 4),
        extras={'lagrangian_minus': build_relativistic_lagrangian(metric, em, sign=-1.0)},
    )


def _build_relativistic_5d(params):
    metric = MetricSpec.minkowski(4)
    em = EMFieldSpec.constant_magnetic(params['B'], e=params['e'], m=params['m'], dim=4, x_index=1, y_index=2)
    lag = build_relativistic_lagrangian(metric, em, extra=True)
    dirac = build_relativistic_dirac(metric, em, extra=True)
    family = HamiltonianFamily(dirac.constraints, dirac.domains, 5)
    m, e = params['m'], params['e']

    def sampler(rng):
        q = rng.uniform(-1, 1, 5)
        pi = _perturbed(rng, _timelike(rng, 4, m))
        return np.concatenate([q, [e + 0.1 * rng.normal()], pi + e * em.A_value(q[1:])])

    def tangent_sampler(rng):
        v = np.concatenate([[rng.normal()], rng.uniform(0.5, 2.0) * _timelike(rng, 4, 1.0)])
        return TangentPoint(rng.uniform(-1, 1, 5), v), None

    return CatalogSystem(
        'relativistic-5d', 'dynamics', 5, params, lagrangian=lag, dirac=dirac, family=family,
        constraints=ConstraintSet(dirac.constraints), sampler=sampler, tangent_sampler=tangent_sampler,
        metric=metric, em=em, initial_state=np.array([0.0] * 5 + [e, m, 0.0, 0.0, 0.0]),
        proper_time_block=slice(1, 5),
    )


def _build_massless(params):
    metric = MetricSpec.minkowski(4)
    lag, dirac = build_massless(metric)
    generator = dirac.constraints[0]
    printed = ExpressionField(lambda z: metric.inverse_quadratic(z[:4], z[4:]), 8, name='g(p,p)')
    family = HamiltonianFamily([generator], [MultiplierDomain.positive()], 4)

    def sampler(rng):
        return np.concatenate([rng.uniform(-1, 1, 4), _perturbed(rng, _null(rng, 4))])

    def tangent_sampler(rng):
        return TangentPoint(rng.uniform(-1, 1, 4), _null(rng, 4)), np.array([rng.uniform(0.5, 2.0)])

    def seed_rule(kept):
        p, y = kept[4:8], kept[8]
        return y * (metric.inverse(None) @ p)

    return CatalogSystem(
        'massless', 'dynamics', 4, params, lagrangian=lag, dirac=dirac, family=family,
        constraints=ConstraintSet([printed]), sampler=sampler, tangent_sampler=tangent_sampler,
        metric=metric, initial_state=np.array([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]),
        energy_reduction={'eliminate': [0, 1, 2, 3], 'seed_rule': seed_rule, 'lift_reference': [1.0],
                          'lift_domains': [MultiplierDomain.positive()]},
    )


def _build_two_particle(params):
    spec = TwoParticleSpec(params['m1'], params['m2'], params['V'], params['omega'], params['c'])
    lag, dirac, psi = build_two_particle(spec)
    family = HamiltonianFamily(dirac.constraints, dirac.domains, 8)

    def configuration(rng):
        q1 = rng.uniform(-1, 1, 4)
        d = rng.normal(size=3)
        d = d / np.linalg.norm(d) * rng.uniform(0.8, 1.5)
        d0 = rng.uniform(-0.3, 0.3) * np.linalg.norm(d)
        return q1, q1 + np.concatenate([[d0], d])

    def sampler(rng):
        q1, q2 = configuration(rng)
        r = float(spec.separation(list(q1), list(q2)))
        mb1, mb2 = (float(v) for v in spec.mbar(r))
        p1 = _perturbed(rng, _timelike(rng, 4, mb1), 0.01)
        p2 = _perturbed(rng, _timelike(rng, 4, mb2), 0.01)
        return np.concatenate([q1, q2, p1, p2])

    def tangent_sampler(rng):
        q1, q2 = configuration(rng)
        v = np.concatenate([rng.uniform(0.5, 2.0) * _timelike(rng, 4, 1.0),
                            rng.uniform(0.5, 2.0) * _timelike(rng, 4, 1.0)])
        return TangentPoint(np.concatenate([q1, q2]), v), None

    return CatalogSystem(
        'two-particle', 'dynamics', 8, params, lagrangian=lag, dirac=dirac, family=family,
        constraints=ConstraintSet(dirac.constraints), sampler=sampler, tangent_sampler=tangent_sampler,
        excluded=_two_particle_excluded, metric=spec.metric, spec=spec, default_gauge='multiplier-cone',
        extras={'psi': psi},
    )


_BUILDERS = {
    'em-3d': _build_em,
    'kaluza-5d': _build_kaluza,
    'relativistic': _build_relativistic,
    'relativistic-5d': _build_relativistic_5d,
    'massless': _build_massless,
    'two-particle': _build_two_particle,
}


def point_on(system, x):
    """Wrap a flat (q, p) array as a CotangentPoint of the system"""
    return CotangentPoint.from_array(np.asarray(x, dtype=float).reshape(2 * system.m))
