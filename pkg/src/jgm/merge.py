"""Least-squares fusion of an image with a target gradient field.

Minimizes ``||x - x_ref||^2 + beta * ||grad(x) - g||^2`` per channel by
solving the screened Poisson system ``(I + beta * L) x = x_ref + beta *
grad^T g`` with conjugate gradients, where ``L = grad^T grad``.
"""

import numpy as np

from .gradients import grad, grad_adjoint, laplacian
from .tensors import ShapeError, check_gradient_field

_SPATIAL = (-3, -2)


class MergeError(RuntimeError):
    """Conjugate gradients failed to reach the requested tolerance."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def _check(x_ref, grads, beta):
    x_ref = np.asarray(x_ref, dtype=np.float64)
    if x_ref.ndim < 3:
        raise ShapeError(f"reference image must be (..., H, W, C), got {x_ref.shape}")
    grads = check_gradient_field(grads, channels=x_ref.shape[-1])
    if grads.shape[:-2] != x_ref.shape[:-1]:
        raise ShapeError(f"reference {x_ref.shape} and gradients {grads.shape} disagree")
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and nonnegative, got {beta}")
    if not np.all(np.isfinite(x_ref)):
        raise ValueError("reference image contains non-finite values")
    return x_ref, grads


def _dot(a, b):
    return np.sum(a * b, axis=_SPATIAL, keepdims=True)


def normal_operator(x, beta):
    """Apply ``I + beta * L`` channel-wise."""
    return x + beta * laplacian(x)


def merge(x_ref, grads, beta=1.0, tol=1e-8, max_iter=None):
    """Fuse a reference image with target gradients.

    Parameters
    ----------
    x_ref : array, shape (..., H, W, C)
        Image term of the objective.
    grads : array, shape (..., H, W, 2, C)
        Target vertical/horizontal differences.
    beta : float
        Weight of the gradient term, ``>= 0``.
    tol : float
        Relative residual ``||A x - b|| / ||b||`` required of every
        independent (batch, channel) system.
    max_iter : int, optional
        Defaults to ``H * W``, the exact-arithmetic bound.

    Returns
    -------
    array, shape (..., H, W, C)
    """
    x_ref, grads = _check(x_ref, grads, beta)
    if beta == 0:
        return x_ref.copy()
    height, width = x_ref.shape[-3], x_ref.shape[-2]
    if max_iter is None:
        max_iter = max(height * width, 10)

    b = x_ref + beta * grad_adjoint(grads)
    b_norm = np.sqrt(_dot(b, b))
    scale = np.where(b_norm > 0, b_norm, 1.0)

    x = x_ref.copy()
    r = b - normal_operator(x, beta)
    p = r.copy()
    rr = _dot(r, r)
    for _ in range(max_iter + 1):
        rel = np.sqrt(rr) / scale
        if np.all(rel <= tol):
            return x
        active = rel > tol
        Ap = normal_operator(p, beta)
        pAp = _dot(p, Ap)
        # converged systems keep their iterate; alpha = 0 freezes them
        alpha = np.where(active, rr / np.where(pAp > 0, pAp, 1.0), 0.0)
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = _dot(r, r)
        beta_cg = np.where(active, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        p = r + beta_cg * p
        rr = rr_new
    worst = float(np.max(np.sqrt(rr) / scale))
    raise MergeError(
        f"conjugate gradients did not reach tol={tol:g} in {max_iter} iterations "
        f"(relative residual {worst:.3e})",
        worst,
    )


def merge_residual(x, x_ref, grads, beta):
    """Largest relative first-order residual over all (batch, channel) systems."""
    x_ref, grads = _check(x_ref, grads, beta)
    b = x_ref + beta * grad_adjoint(grads)
    r = normal_operator(np.asarray(x, dtype=np.float64), beta) - b
    b_norm = np.sqrt(_dot(b, b))
    return float(np.max(np.sqrt(_dot(r, r)) / np.where(b_norm > 0, b_norm, 1.0)))


def objective(x, x_ref, grads, beta=1.0):
    """Value of the fusion objective at ``x``, summed over every axis."""
    x_ref, grads = _check(x_ref, grads, beta)
    x = np.asarray(x, dtype=np.float64)
    fidelity = np.sum((x - x_ref) ** 2)
    gradient_term = np.sum((grad(x) - grads) ** 2)
    return float(fidelity + beta * gradient_term)


def gradient_term(x, grads):
    """The gradient-mismatch part ``||grad(x) - g||^2`` alone."""
    return float(np.sum((grad(x) - np.asarray(grads, dtype=np.float64)) ** 2))
