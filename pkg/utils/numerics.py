"""
Numerical kernels shared by the mechanics modules: rank decisions,
nullspaces, Newton and Gauss-Newton solvers, central differences
"""

import logging

import numpy as np
from scipy.linalg import null_space, svdvals

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


DEFAULT_RANK_RTOL = 1e-8


class NumericalFailure(RuntimeError):
    """Base class for failures of an iterative numerical procedure"""


class SingularNewtonError(NumericalFailure):
    """Raised when a Newton step meets a singular Jacobian"""


class ConvergenceError(NumericalFailure):
    """Raised when an iteration does not reach its tolerance"""


def numerical_rank(matrix, rtol=DEFAULT_RANK_RTOL):
    """
    Compute the numerical rank of a matrix

    A singular value counts when it exceeds rtol times the largest one.

    Args:
        matrix (np.ndarray): Matrix of any shape
        rtol (float): Relative singular value threshold

    Returns:
        tuple: (rank, singular values in decreasing order)
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0, np.zeros(0)
    sv = svdvals(matrix)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv
    return int(np.sum(sv > rtol * sv[0])), sv


def nullspace(matrix, rtol=DEFAULT_RANK_RTOL):
    """
    Orthonormal basis of the nullspace of a matrix

    Args:
        matrix (np.ndarray): Matrix of shape (r, n)
        rtol (float): Relative singular value threshold

    Returns:
        np.ndarray: Basis as columns, shape (n, n - rank)
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] == 0 or not np.any(matrix):
        return np.eye(matrix.shape[1])
    return null_space(matrix, rcond=rtol)


def central_gradient(func, x, h=1e-6):
    """
    Central-difference gradient of a scalar function

    Args:
        func (callable): Map from an n-vector to a float
        x (np.ndarray): Evaluation point
        h (float): Step

    Returns:
        np.ndarray: Gradient of length n
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        grad[i] = (func(x + e) - func(x - e)) / (2.0 * h)
    return grad


def central_jacobian(func, x, h=1e-6):
    """
    Central-difference Jacobian of a vector function

    Args:
        func (callable): Map from an n-vector to an r-vector
        x (np.ndarray): Evaluation point
        h (float): Step

    Returns:
        np.ndarray: Jacobian of shape (r, n)
    """
    x = np.asarray(x, dtype=float)
    columns = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        plus = np.atleast_1d(np.asarray(func(x + e), dtype=float))
        minus = np.atleast_1d(np.asarray(func(x - e), dtype=float))
        columns.append((plus - minus) / (2.0 * h))
    if not columns:
        r = np.atleast_1d(np.asarray(func(x), dtype=float)).size
        return np.zeros((r, 0))
    return np.column_stack(columns)


def newton_solve(residual, jacobian, x0, tol=1e-12, max_iter=50, least_squares=False,
                 rank_rtol=DEFAULT_RANK_RTOL):
    """
    Damped Newton iteration for a square nonlinear system

    The step is halved while the residual norm grows; a step shorter than
    1e-4 of the full Newton step is accepted as is.

    Args:
        residual (callable): Map x -> residual vector
        jacobian (callable): Map x -> square Jacobian matrix
        x0 (np.ndarray): Starting point
        tol (float): Convergence threshold on max |residual|
        max_iter (int): Iteration limit
        least_squares (bool): Take minimum-norm steps instead of failing
            on a singular Jacobian
        rank_rtol (float): Relative threshold for the singularity decision

    Returns:
        tuple: (solution, iterations used)

    Raises:
        SingularNewtonError: Singular Jacobian and least_squares is False
        ConvergenceError: Tolerance not reached within max_iter
    """
    x = np.array(x0, dtype=float)
    r = np.atleast_1d(np.asarray(residual(x), dtype=float))
    for iteration in range(max_iter + 1):
        norm = float(np.max(np.abs(r))) if r.size else 0.0
        if norm <= tol:
            return x, iteration
        if iteration == max_iter:
            break

        J = np.atleast_2d(np.asarray(jacobian(x), dtype=float))
        rank, sv = numerical_rank(J, rank_rtol)
        if rank < min(J.shape):
            if not least_squares:
                error_msg = (
                    f"Singular Newton Jacobian at iteration {iteration}: "
                    f"rank {rank} of {min(J.shape)}, smallest singular value "
                    f"{sv[-1] if sv.size else 0.0:.3e}"
                )
                logger.error(error_msg)
                raise SingularNewtonError(error_msg)
            step = np.linalg.lstsq(J, -r, rcond=rank_rtol)[0]
        else:
            step = np.linalg.solve(J, -r)

        t = 1.0
        while True:
            candidate = x + t * step
            try:
                r_new = np.atleast_1d(np.asarray(residual(candidate), dtype=float))
                new_norm = float(np.max(np.abs(r_new))) if r_new.size else 0.0
            except (ValueError, ZeroDivisionError, OverflowError):
                new_norm = np.inf
            if new_norm < norm or t < 1e-4:
                break
            t *= 0.5
        if not np.isfinite(new_norm):
            break
        if t < 1.0:
            logger.warning(f"Newton step damped to t={t:.3g} at iteration {iteration}")
        if np.all(t * step == 0.0):
            break
        x, r = candidate, r_new

    error_msg = (
        f"Newton iteration did not converge in {max_iter} iterations "
        f"(last residual {float(np.max(np.abs(r))) if r.size else 0.0:.3e}, tol {tol:.1e})"
    )
    logger.error(error_msg)
    raise ConvergenceError(error_msg)


def gauss_newton(residual, jacobian, x0, tol=1e-12, max_iter=50, step_tol=1e-15,
                 rank_rtol=DEFAULT_RANK_RTOL):
    """
    Minimum-norm Gauss-Newton iteration for an underdetermined system

    Each step solves J dx = -r in the least-squares sense, so the iterate
    moves the least possible distance toward the zero set.

    Args:
        residual (callable): Map x -> residual vector
        jacobian (callable): Map x -> Jacobian matrix of shape (r, n)
        x0 (np.ndarray): Starting point
        tol (float): Convergence threshold on max |residual|
        max_iter (int): Iteration limit
        step_tol (float): Stagnation threshold on the step norm
        rank_rtol (float): rcond passed to the least-squares solve

    Returns:
        np.ndarray: Point with max |residual| <= tol

    Raises:
        ConvergenceError: Tolerance not reached
    """
    x = np.array(x0, dtype=float)
    r = np.atleast_1d(np.asarray(residual(x), dtype=float))
    for iteration in range(max_iter):
        if r.size == 0 or float(np.max(np.abs(r))) <= tol:
            return x
        J = np.atleast_2d(np.asarray(jacobian(x), dtype=float))
        delta = np.linalg.lstsq(J, -r, rcond=rank_rtol)[0]
        x = x + delta
        r = np.atleast_1d(np.asarray(residual(x), dtype=float))
        if np.linalg.norm(delta) < step_tol:
            break
    if r.size == 0 or float(np.max(np.abs(r))) <= tol:
        return x
    error_msg = (
        f"Gauss-Newton did not reach tol {tol:.1e} "
        f"(residual {float(np.max(np.abs(r))):.3e} after {max_iter} iterations)"
    )
    logger.error(error_msg)
    raise ConvergenceError(error_msg)
