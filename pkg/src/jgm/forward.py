"""Color-to-gray observation operators and data-consistency gradients."""

from dataclasses import dataclass

import numpy as np

from .gradients import grad_scalar
from .tensors import ShapeError, check_color_image, check_gradient_field, check_gray_image


@dataclass(frozen=True)
class ForwardOperator:
    """A per-pixel weighted sum of the r, g, b planes.

    Weights must be strictly positive and sum to one.
    """

    name: str
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (3,):
            raise ValueError("a forward operator needs exactly three weights")
        if np.any(w <= 0):
            raise ValueError(f"weights must be strictly positive, got {self.weights}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")

    @property
    def w(self):
        return np.asarray(self.weights, dtype=np.float64)

    @property
    def norm_sq(self):
        """Spectral norm squared of ``F^T F`` (equal to ``|w|^2``)."""
        return float(self.w @ self.w)


AVERAGE = ForwardOperator("average", (1 / 3, 1 / 3, 1 / 3))
LUMA = ForwardOperator("luma", (0.3, 0.59, 0.11))

OPERATORS = {op.name: op for op in (AVERAGE, LUMA)}


def get_operator(name):
    if isinstance(name, ForwardOperator):
        return name
    try:
        return OPERATORS[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown forward operator {name!r}; choose from {sorted(OPERATORS)}"
        ) from None


def apply(op, x):
    """Collapse the trailing color axis: ``y = sum_c w_c x_c``.

    Works on color images ``(..., H, W, 3)`` and on gradient fields
    ``(..., H, W, 2, 3)`` alike.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 3:
        raise ShapeError(f"expected a trailing color axis of size 3, got {x.shape}")
    return x @ get_operator(op).w


def adjoint(op, r):
    """``F^T r``: spread a gray residual back over the color channels."""
    r = np.asarray(r, dtype=np.float64)
    return r[..., None] * get_operator(op).w


def dc_intensity(op, x, y):
    """Gradient of ``0.5 * ||F x - y||^2`` with respect to the color image."""
    x = check_color_image(x)
    y = check_gray_image(y)
    if x.shape[:-1] != y.shape:
        raise ShapeError(f"image {x.shape} and observation {y.shape} disagree")
    return adjoint(op, apply(op, x) - y)


def dc_gradient(op, gx, y, grad_y=None):
    """Gradient of ``0.5 * ||F gx - grad(y)||^2`` with respect to ``gx``.

    ``grad_y`` may be supplied to avoid recomputing ``grad_scalar(y)`` on
    every sampler step.
    """
    gx = check_gradient_field(gx, channels=3)
    if grad_y is None:
        y = check_gray_image(y)
        if gx.shape[:-2] != y.shape:
            raise ShapeError(f"gradient field {gx.shape} and observation {y.shape} disagree")
        grad_y = grad_scalar(y)
    elif grad_y.shape != gx.shape[:-1]:
        raise ShapeError(f"gradient field {gx.shape} and grad(y) {grad_y.shape} disagree")
    return adjoint(op, apply(op, gx) - grad_y)
