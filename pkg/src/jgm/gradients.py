"""Forward-difference image gradients and their exact adjoint.

The vertical difference at row ``i`` is ``x[i + 1] - x[i]``; the last row is
zero. The horizontal difference is the same along columns. No spacing
rescaling is applied.
"""

import enum

import numpy as np

from .tensors import check_gradient_field, check_gray_image


class BoundaryRule(enum.IntEnum):
    """Trailing-edge handling of the difference operators.

    The integer value is what checkpoints record.
    """

    ZERO_AT_EDGE = 0


BOUNDARY_RULE = BoundaryRule.ZERO_AT_EDGE


def _forward_diff(x, axis):
    out = np.zeros_like(x)
    n = x.shape[axis]
    lead = [slice(None)] * x.ndim
    tail = [slice(None)] * x.ndim
    lead[axis] = slice(0, n - 1)
    tail[axis] = slice(1, n)
    out[tuple(lead)] = x[tuple(tail)] - x[tuple(lead)]
    return out


def _forward_diff_adjoint(f, axis):
    # coefficient of x[k] in <Dx, f> is f[k-1] (k >= 1) minus f[k] (k <= n-2)
    n = f.shape[axis]
    out = np.zeros_like(f)
    if n == 1:
        return out
    head = [slice(None)] * f.ndim
    body = [slice(None)] * f.ndim
    head[axis] = slice(0, n - 1)
    body[axis] = slice(1, n)
    out[tuple(head)] -= f[tuple(head)]
    out[tuple(body)] += f[tuple(head)]
    return out


def grad(image):
    """Vertical and horizontal forward differences of a multi-channel image.

    Parameters
    ----------
    image : array_like, shape (..., H, W, C)

    Returns
    -------
    array, shape (..., H, W, 2, C)
        ``[..., 0, :]`` is the vertical component, ``[..., 1, :]`` the
        horizontal one.
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim < 3:
        raise ValueError(f"expected (..., H, W, C), got shape {x.shape}")
    return np.stack([_forward_diff(x, -3), _forward_diff(x, -2)], axis=-2)


def grad_scalar(gray):
    """Gradient of a single-channel image; returns shape ``(..., H, W, 2)``."""
    y = check_gray_image(gray)
    return grad(y[..., None])[..., 0]


def grad_adjoint(field):
    """Adjoint of :func:`grad` (a negative divergence).

    Satisfies ``<grad(x), f> == <x, grad_adjoint(f)>`` for every ``x`` and
    ``f`` of matching size.
    """
    f = check_gradient_field(field)
    vertical = _forward_diff_adjoint(f[..., 0, :], -3)
    horizontal = _forward_diff_adjoint(f[..., 1, :], -2)
    return vertical + horizontal


def laplacian(image):
    """``grad_adjoint(grad(x))``: the positive semi-definite graph Laplacian."""
    return grad_adjoint(grad(image))
