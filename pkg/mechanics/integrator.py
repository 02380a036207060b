"""
Fixed-step integration of Dirac systems with gauge-fixed multipliers,
per-step constraint projection and drift audits
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.optimize import newton

from mechanics.bundles import CotangentPoint, PhaseVelocity
from mechanics.constraint_algo import (
    ConstraintSet,
    OffConstraintError,
    ProjectionError,
    multiplier_conditions,
    project_to_constraints,
)
from mechanics.dynamics import MultiplierDomainError, dirac_residual
from mechanics.jetcalc import DomainError
from utils.numerics import NumericalFailure

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


ON_SET_TOL = 1e-8


class IntegrationError(NumericalFailure):
    """Raised when a step cannot be taken; carries the step index"""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class OrientationError(ValueError):
    """Raised when a time map reverses orientation"""


class Gauge:
    """Rule fixing the multipliers of a Dirac system at each phase-space point"""

    def __init__(self, name, rule):
        """
        Initialize a gauge

        Args:
            name (str): Label ("unit", "proper-time", "custom", ...)
            rule (callable): Map (DiracSystem, x) -> multiplier vector
        """
        self.name = name
        self.rule = rule

    def __repr__(self):
        return f"Gauge({self.name!r})"

    def __call__(self, sys, x):
        return np.asarray(self.rule(sys, x), dtype=float).reshape(-1)

    @classmethod
    def unit(cls):
        """Every multiplier equal to one"""
        return cls('unit', lambda sys, x: np.ones(sys.n_multipliers))

    @classmethod
    def proper_time(cls, metric, block=None):
        """
        First multiplier chosen so the velocity block has unit g-norm

        Args:
            metric (callable): Map q -> metric matrix on the block
            block (slice, optional): Configuration indices the metric acts on

        Returns:
            Gauge: Gauge named 'proper-time'
        """
        def rule(sys, x):
            m = sys.m
            q, p = x[:m], x[m:]
            sel = block if block is not None else slice(0, m)
            v = np.ones(sys.n_multipliers)
            v[0] = 0.0
            qdot, _ = sys.vector_field(x, v)
            v[0] = 1.0
            qdot_full, _ = sys.vector_field(x, v)
            direction = (qdot_full - qdot)[sel]
            g = np.asarray(metric(q[sel]), dtype=float)
            norm_sq = float(direction @ g @ direction)
            if abs(norm_sq) <= 1e-14:
                raise ValueError(f"Proper-time gauge undefined on a null direction at p={p}")
            v[0] = 1.0 / np.sqrt(abs(norm_sq))
            return v

        return cls('proper-time', rule)

    @classmethod
    def custom(cls, name, rule):
        return cls(name, rule)

    @classmethod
    def from_multiplier_conditions(cls, family, constraints):
        """
        Multipliers from an interior point of the multiplier cone, normalized
        so that they sum to two

        Args:
            family (HamiltonianFamily): Family whose generators are the system's constraints
            constraints (ConstraintSet): Constraints including the secondary ones
        """
        def rule(sys, x):
            conditions = multiplier_conditions(family, constraints, x)
            if not conditions.feasible:
                raise MultiplierDomainError(f"Empty multiplier cone at {x}")
            alpha = conditions.alpha
            return 2.0 * alpha / np.sum(alpha)

        return cls('multiplier-cone', rule)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Times, states (q, p) and gauge values of an integrated solution"""

    times: np.ndarray
    states: np.ndarray
    gauges: np.ndarray
    m: int

    def __post_init__(self):
        if self.states.shape != (self.times.size, 2 * self.m):
            raise ValueError(f"States shape {self.states.shape} does not match {self.times.size} x {2 * self.m}")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    def point(self, i):
        return CotangentPoint.from_array(self.states[i])

    @property
    def q(self):
        return self.states[:, :self.m]

    @property
    def p(self):
        return self.states[:, self.m:]

    def to_frame(self):
        """One row per step: t, q0.., p0.., v0.."""
        data = {'t': self.times}
        for i in range(self.m):
            data[f"q{i}"] = self.states[:, i]
        for i in range(self.m):
            data[f"p{i}"] = self.states[:, self.m + i]
        for i in range(self.gauges.shape[1]):
            data[f"v{i}"] = self.gauges[:, i]
        return pd.DataFrame(data)


def _gauged_field(sys, gauge, x, step):
    try:
        v = sys.check_multipliers(gauge(sys, x))
        qdot, pdot = sys.vector_field(x, v)
    except (MultiplierDomainError, DomainError, ValueError) as e:
        error_msg = f"Step {step}: {str(e)}"
        logger.error(error_msg)
        raise IntegrationError(error_msg, step)
    return np.concatenate([qdot, pdot]), v


def integrate(sys, gauge, x0, dt, steps, project_every=1, constraints=None, t0=0.0, tol=ON_SET_TOL):
    """
    Classical fourth-order Runge-Kutta integration with periodic projection

    Args:
        sys (DiracSystem): System
        gauge (Gauge): Multiplier rule
        x0 (CotangentPoint or array-like): Initial point on the constraint set
        dt (float): Step size
        steps (int): Number of steps
        project_every (int): Project onto the constraints every n steps (0 disables)
        constraints (ConstraintSet, optional): Constraints to enforce (default: the system's)
        t0 (float): Initial time
        tol (float): Membership tolerance for x0

    Returns:
        Trajectory: steps + 1 states

    Raises:
        OffConstraintError: x0 not on the constraint set
        IntegrationError: Gauge outside its domain, domain violation or projection failure
    """
    if dt <= 0 or steps < 0:
        raise ValueError(f"Need dt > 0 and steps >= 0, got dt={dt}, steps={steps}")
    C = constraints if constraints is not None else ConstraintSet(sys.constraints)
    x = x0.as_array() if isinstance(x0, CotangentPoint) else np.asarray(x0, dtype=float)
    violation = C.max_violation(x)
    if violation > tol:
        error_msg = f"Initial point is off the constraint set: max |Phi| = {violation:.3e}"
        logger.error(error_msg)
        raise OffConstraintError(error_msg)

    states = np.zeros((steps + 1, x.size))
    gauges = np.zeros((steps + 1, sys.n_multipliers))
    states[0] = x
    for n in range(steps):
        k1, v = _gauged_field(sys, gauge, x, n)
        gauges[n] = v
        k2, _ = _gauged_field(sys, gauge, x + 0.5 * dt * k1, n)
        k3, _ = _gauged_field(sys, gauge, x + 0.5 * dt * k2, n)
        k4, _ = _gauged_field(sys, gauge, x + dt * k3, n)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            error_msg = f"Step {n}: state is no longer finite"
            logger.error(error_msg)
            raise IntegrationError(error_msg, n)
        if project_every and (n + 1) % project_every == 0 and not C.is_empty:
            try:
                x = project_to_constraints(x, C).as_array()
            except ProjectionError as e:
                raise IntegrationError(f"Step {n}: {str(e)}", n)
        states[n + 1] = x
    gauges[steps] = _gauged_field(sys, gauge, x, steps)[1]

    times = t0 + dt * np.arange(steps + 1)
    logger.info(f"Integrated '{sys.name}' for {steps} steps with gauge '{gauge.name}'")
    return Trajectory(times, states, gauges, sys.m)


def drift_report(traj, C):
    """
    Constraint values along a trajectory

    Args:
        traj (Trajectory): Trajectory
        C (ConstraintSet): Constraints

    Returns:
        dict: max, final, per_step (max |Phi_A| per row) and per_constraint maxima
    """
    if C.is_empty:
        per_step = np.zeros(len(traj))
        per_constraint = {}
    else:
        values = np.abs(np.array([C.values(x) for x in traj.states]))
        per_step = values.max(axis=1)
        per_constraint = {name: float(values[:, A].max()) for A, name in enumerate(C.names)}
    return {
        'max': float(per_step.max()) if per_step.size else 0.0,
        'final': float(per_step[-1]) if per_step.size else 0.0,
        'steps': len(traj) - 1,
        'per_constraint': per_constraint,
        'per_step': per_step,
    }


def conserved_drift(traj, F):
    """Largest |F(x_i) - F(x_0)| along a trajectory"""
    values = np.array([F.evaluate(x) for x in traj.states])
    return float(np.max(np.abs(values - values[0])))


def _time_derivative(traj):
    """Fourth-order central differences of the states on interior rows"""
    dt = traj.times[1] - traj.times[0]
    s = traj.states
    return (-s[4:] + 8.0 * s[3:-1] - 8.0 * s[1:-3] + s[:-4]) / (12.0 * dt)


def reparametrize_check(sys, traj, sigma, sigma_prime=None, h=1e-6):
    """
    Residual of a reparametrized trajectory with rescaled multipliers

    The curve s -> x(sigma(s)) is checked against the Dirac equations with
    multipliers sigma'(s) v at the parameters where sigma(s) hits an interior
    time sample; velocities come from the trajectory data.

    Args:
        sys (DiracSystem): System the trajectory solves
        traj (Trajectory): Trajectory with at least five rows
        sigma (callable): Increasing time map s -> t
        sigma_prime (callable, optional): Derivative of sigma (central differences otherwise)
        h (float): Step of the fallback derivative

    Returns:
        float: Largest Dirac residual entry

    Raises:
        OrientationError: sigma' <= 0 somewhere on the checked range
    """
    if len(traj) < 5:
        raise ValueError("reparametrize_check needs at least five trajectory rows")
    if sigma_prime is None:
        def sigma_prime(s):
            return (sigma(s + h) - sigma(s - h)) / (2.0 * h)

    def rate(u):
        return np.broadcast_to(np.asarray(sigma_prime(u), dtype=float), np.shape(u)).copy()

    times = traj.times[2:-2]
    s = np.atleast_1d(newton(lambda u: sigma(u) - times, times.copy(), fprime=rate, tol=1e-14, maxiter=100))
    rates = rate(s)
    if np.any(rates <= 0.0):
        error_msg = "Time map must have positive derivative"
        logger.error(error_msg)
        raise OrientationError(error_msg)

    m = traj.m
    velocities = _time_derivative(traj)
    worst = 0.0
    for i, (r, xdot) in enumerate(zip(rates, velocities)):
        x = traj.states[i + 2]
        z = PhaseVelocity(x[:m], x[m:], r * xdot[:m], r * xdot[m:])
        residual = dirac_residual(sys, z, r * traj.gauges[i + 2])
        worst = max(worst, residual.norm)
    return worst
