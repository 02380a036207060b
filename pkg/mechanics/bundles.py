"""
Coordinate points of the tangent and cotangent bundles and the canonical
maps between the iterated bundles
"""

import logging
from dataclasses import dataclass, fields

import numpy as np

from mechanics.jetcalc import BracketField, ScalarField

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


BASE_MATCH_TOL = 1e-12


class BaseMismatchError(ValueError):
    """Raised when two paired points are attached to different base points"""


def _frozen_vector(value):
    array = np.array(value, dtype=float).reshape(-1)
    array.setflags(write=False)
    return array


class _BundlePoint:
    """Shared behaviour of the coordinate tuples below"""

    def __post_init__(self):
        names = [f.name for f in fields(self)]
        vectors = [_frozen_vector(getattr(self, name)) for name in names]
        sizes = {v.size for v in vectors}
        if len(sizes) != 1:
            shapes = ', '.join(f"{n}={v.size}" for n, v in zip(names, vectors))
            raise ValueError(f"{type(self).__name__} components must share one dimension ({shapes})")
        for name, vector in zip(names, vectors):
            object.__setattr__(self, name, vector)

    @property
    def dim(self):
        """Dimension m of the configuration space"""
        return getattr(self, fields(self)[0].name).size

    def as_array(self):
        """Concatenated coordinates in declaration order"""
        return np.concatenate([getattr(self, f.name) for f in fields(self)])

    @classmethod
    def from_array(cls, array):
        """Split a flat coordinate array into the declared components"""
        parts = np.split(np.asarray(array, dtype=float), len(fields(cls)))
        return cls(*parts)


@dataclass(frozen=True, eq=False)
class TangentPoint(_BundlePoint):
    """Point (q, v) of TQ"""

    q: np.ndarray
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class CotangentPoint(_BundlePoint):
    """Point (q, p) of T*Q"""

    q: np.ndarray
    p: np.ndarray


@dataclass(frozen=True, eq=False)
class PhaseVelocity(_BundlePoint):
    """Point (q, p, qdot, pdot) of TT*Q"""

    q: np.ndarray
    p: np.ndarray
    qdot: np.ndarray
    pdot: np.ndarray

    @property
    def base(self):
        return CotangentPoint(self.q, self.p)

    @property
    def tangent(self):
        return TangentPoint(self.q, self.qdot)


@dataclass(frozen=True, eq=False)
class IteratedTangent(_BundlePoint):
    """Point (q, qdot, qprime, qdotprime) of TTQ"""

    q: np.ndarray
    qdot: np.ndarray
    qprime: np.ndarray
    qdotprime: np.ndarray


@dataclass(frozen=True, eq=False)
class SecondTangent(_BundlePoint):
    """Point (q, qdot, qddot) of the second tangent bundle"""

    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray


@dataclass(frozen=True, eq=False)
class CotangentOfTangent(_BundlePoint):
    """Point (q, qdot, a, b) of T*TQ"""

    q: np.ndarray
    qdot: np.ndarray
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class CotangentOfCotangent(_BundlePoint):
    """Point (q, p, u, vup) of T*T*Q"""

    q: np.ndarray
    p: np.ndarray
    u: np.ndarray
    vup: np.ndarray


def kappa(w):
    """Canonical involution of TTQ: swaps qdot and qprime"""
    return IteratedTangent(w.q, w.qprime, w.qdot, w.qdotprime)


def alpha(z):
    """(q, p, qdot, pdot) -> (q, qdot, a=pdot, b=p)"""
    return CotangentOfTangent(z.q, z.qdot, z.pdot, z.p)


def alpha_inverse(n):
    """(q, qdot, a, b) -> (q, p=b, qdot, pdot=a)"""
    return PhaseVelocity(n.q, n.b, n.qdot, n.a)


def beta(z):
    """(q, p, qdot, pdot) -> (q, p, u=pdot, v=-qdot)"""
    return CotangentOfCotangent(z.q, z.p, z.pdot, -z.qdot)


def beta_inverse(b):
    """(q, p, u, v) -> (q, p, qdot=-v, pdot=u)"""
    return PhaseVelocity(b.q, b.p, -b.vup, b.u)


def _cotangent_array(x):
    if isinstance(x, CotangentPoint):
        return x.as_array()
    return np.asarray(x, dtype=float)


def poisson_bracket_from_gradients(grad_F, grad_G, m):
    """
    Poisson bracket from two gradients over (q, p)

    Args:
        grad_F (np.ndarray): Gradient of F, length 2m
        grad_G (np.ndarray): Gradient of G, length 2m
        m (int): Configuration dimension

    Returns:
        float: sum_k dF/dq^k dG/dp_k - dG/dq^k dF/dp_k
    """
    return float(grad_F[:m] @ grad_G[m:] - grad_G[:m] @ grad_F[m:])


def poisson_bracket(F, G, x):
    """
    Poisson bracket {F, G} at a point of T*Q

    Args:
        F (ScalarField): Field of arity 2m over (q, p)
        G (ScalarField): Field of arity 2m over (q, p)
        x (CotangentPoint or array-like): Evaluation point

    Returns:
        float: Bracket value

    Raises:
        DomainError: x outside either field's domain
    """
    point = _cotangent_array(x)
    m = point.size // 2
    return poisson_bracket_from_gradients(F.jet(point, order=1).gradient,
                                          G.jet(point, order=1).gradient, m)


def liouville_pair(w):
    """Liouville form on a phase velocity: p . qdot"""
    return float(w.p @ w.qdot)


def dT_function(F, x):
    """
    Tangent lift of a function on Q: grad F(q) . v

    Args:
        F (ScalarField): Field of arity m
        x (TangentPoint): Point of TQ

    Returns:
        float: Value of d_T F at x
    """
    return float(F.jet(x.q, order=1).gradient @ x.v)


def split_variation(dz, m):
    """Split a 4m variation vector into (dq, dp, dqdot, dpdot)"""
    dz = np.asarray(dz, dtype=float)
    if dz.size != 4 * m:
        raise ValueError(f"Variation vector must have length {4 * m}, got {dz.size}")
    return dz[:m], dz[m:2 * m], dz[2 * m:3 * m], dz[3 * m:]


def dT_theta(z, dz):
    """
    Tangent lift of the Liouville form on a variation of TT*Q

    Args:
        z (PhaseVelocity): Base point
        dz (np.ndarray): Variation (dq, dp, dqdot, dpdot)

    Returns:
        float: pdot . dq + p . dqdot
    """
    dq, _, dqdot, _ = split_variation(dz, z.dim)
    return float(z.pdot @ dq + z.p @ dqdot)


def iT_omega(z, dz):
    """
    Vertical lift of the symplectic form on a variation of TT*Q

    Args:
        z (PhaseVelocity): Base point
        dz (np.ndarray): Variation (dq, dp, dqdot, dpdot)

    Returns:
        float: pdot . dq - qdot . dp
    """
    dq, dp, _, _ = split_variation(dz, z.dim)
    return float(z.pdot @ dq - z.qdot @ dp)


def dT_omega(dz1, dz2):
    """
    Symplectic form d_T omega on two variations of TT*Q at one base point

    Args:
        dz1 (np.ndarray): First variation (dq, dp, dqdot, dpdot)
        dz2 (np.ndarray): Second variation

    Returns:
        float: sum(dpdot1 dq2 - dpdot2 dq1 + dp1 dqdot2 - dp2 dqdot1)
    """
    dz1 = np.asarray(dz1, dtype=float)
    m = dz1.size // 4
    q1, p1, qd1, pd1 = split_variation(dz1, m)
    q2, p2, qd2, pd2 = split_variation(dz2, m)
    return float(pd1 @ q2 - pd2 @ q1 + p1 @ qd2 - p2 @ qd1)


def omega_Q(dx1, dx2):
    """Symplectic form dp ^ dq on two variations (dq, dp) of T*Q"""
    dx1 = np.asarray(dx1, dtype=float)
    dx2 = np.asarray(dx2, dtype=float)
    m = dx1.size // 2
    return float(dx1[m:] @ dx2[:m] - dx2[m:] @ dx1[:m])


def theta_TQ(n, dn):
    """
    Liouville form of T*TQ on a variation (dq, dqdot, da, db)

    Args:
        n (CotangentOfTangent): Base point
        dn (np.ndarray): Variation vector of length 4m

    Returns:
        float: a . dq + b . dqdot
    """
    m = n.dim
    dn = np.asarray(dn, dtype=float)
    return float(n.a @ dn[:m] + n.b @ dn[m:2 * m])


def theta_TstarQ(b, db):
    """
    Liouville form of T*T*Q on a variation (dq, dp, du, dv)

    Args:
        b (CotangentOfCotangent): Base point
        db (np.ndarray): Variation vector of length 4m

    Returns:
        float: u . dq + v . dp
    """
    m = b.dim
    db = np.asarray(db, dtype=float)
    return float(b.u @ db[:m] + b.vup @ db[m:2 * m])


def alpha_pushforward(dz):
    """Variation (dq, dp, dqdot, dpdot) -> (dq, dqdot, dpdot, dp)"""
    dq, dp, dqdot, dpdot = split_variation(dz, np.asarray(dz).size // 4)
    return np.concatenate([dq, dqdot, dpdot, dp])


def beta_pushforward(dz):
    """Variation (dq, dp, dqdot, dpdot) -> (dq, dp, dpdot, -dqdot)"""
    dq, dp, dqdot, dpdot = split_variation(dz, np.asarray(dz).size // 4)
    return np.concatenate([dq, dp, dpdot, -dqdot])


def tulczyjew_pairing(z, w):
    """
    Pairing between TT*Q and TTQ over the same point of TQ

    Args:
        z (PhaseVelocity): Phase velocity
        w (IteratedTangent): Element of TTQ with w.q = z.q and w.qdot = z.qdot

    Returns:
        float: p . qdotprime + pdot . qprime
    """
    _check_base(z.q, w.q, 'tulczyjew_pairing')
    return float(z.p @ w.qdotprime + z.pdot @ w.qprime)


def _check_base(q1, q2, operation):
    if np.size(q1) != np.size(q2):
        error_msg = f"{operation}: base dimensions differ ({np.size(q1)} vs {np.size(q2)})"
        logger.error(error_msg)
        raise BaseMismatchError(error_msg)
    gap = float(np.max(np.abs(np.asarray(q1) - np.asarray(q2)))) if np.size(q1) else 0.0
    if gap > BASE_MATCH_TOL:
        error_msg = f"{operation}: base points differ (max gap {gap:.3e}, tol {BASE_MATCH_TOL:.0e})"
        logger.error(error_msg)
        raise BaseMismatchError(error_msg)


def chi_shift(w, f):
    """
    Force shift of a phase velocity: pdot -> pdot - f

    Args:
        w (PhaseVelocity): Phase velocity
        f (CotangentPoint): Force covector at the same configuration

    Returns:
        PhaseVelocity: Shifted phase velocity

    Raises:
        BaseMismatchError: f.q differs from w.q
    """
    _check_base(w.q, f.q, 'chi_shift')
    return PhaseVelocity(w.q, w.p, w.qdot, w.pdot - f.p)


def bracket_field(F, G):
    """Poisson bracket of two fields as a field (see jetcalc.BracketField)"""
    if not isinstance(F, ScalarField) or not isinstance(G, ScalarField):
        raise TypeError("bracket_field expects two ScalarField objects")
    return BracketField(F, G, F.arity // 2)
