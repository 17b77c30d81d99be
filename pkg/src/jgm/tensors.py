"""Image and joint-tensor conventions plus input validation.

All images are plain float64 numpy arrays; leading batch axes are allowed
everywhere.

========================  ==========================  =====================
kind                      shape                       notes
========================  ==========================  =====================
color image               ``(..., H, W, 3)``          r, g, b planes
gray image                ``(..., H, W)``
gradient field            ``(..., H, W, 2, C)``       axis -2: vertical,
                                                      horizontal
joint tensor              ``(..., H, W, 9)``          see below
========================  ==========================  =====================

The joint tensor channel order is ``[x_r, x_g, x_b, v_r, v_g, v_b, h_r, h_g,
h_b]`` where ``v`` is the vertical and ``h`` the horizontal forward
difference. Because the gradient field stores direction before color,
``X[..., 3:]`` reshaped to ``(2, 3)`` is exactly the gradient field, so
stacking and splitting never reorder memory.
"""

import numpy as np

N_COLORS = 3
N_JOINT = 9


class ShapeError(ValueError):
    """Raised when an array does not have the layout an operation expects."""


def _as_finite(a, name):
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_color_image(x, name="image"):
    """Return ``x`` as a finite float64 array of shape ``(..., H, W, 3)``."""
    arr = _as_finite(x, name)
    if arr.ndim < 3 or arr.shape[-1] != N_COLORS:
        raise ShapeError(f"{name} must have shape (..., H, W, 3), got {arr.shape}")
    if arr.shape[-3] < 1 or arr.shape[-2] < 1:
        raise ShapeError(f"{name} must have positive height and width")
    return arr


def check_gray_image(y, name="gray image"):
    arr = _as_finite(y, name)
    if arr.ndim < 2 or arr.shape[-1] < 1 or arr.shape[-2] < 1:
        raise ShapeError(f"{name} must have shape (..., H, W), got {arr.shape}")
    return arr


def check_gradient_field(g, channels=None, name="gradient field"):
    arr = _as_finite(g, name)
    if arr.ndim < 4 or arr.shape[-2] != 2:
        raise ShapeError(f"{name} must have shape (..., H, W, 2, C), got {arr.shape}")
    if channels is not None and arr.shape[-1] != channels:
        raise ShapeError(f"{name} must have {channels} channels, got {arr.shape[-1]}")
    return arr


def check_joint_tensor(X, channels=N_JOINT, name="joint tensor"):
    arr = _as_finite(X, name)
    if arr.ndim < 3 or arr.shape[-1] != channels:
        raise ShapeError(
            f"{name} must have shape (..., H, W, {channels}), got {arr.shape}"
        )
    return arr


def stack(image, grads):
    """Stack a color image and its gradient field into a 9-channel joint tensor.

    Parameters
    ----------
    image : array, shape (..., H, W, 3)
    grads : array, shape (..., H, W, 2, 3)

    Returns
    -------
    X : array, shape (..., H, W, 9)
    """
    image = check_color_image(image)
    grads = check_gradient_field(grads, channels=N_COLORS)
    if grads.shape[:-2] != image.shape[:-1]:
        raise ShapeError(
            f"image {image.shape} and gradient field {grads.shape} disagree on size"
        )
    flat = grads.reshape(grads.shape[:-2] + (2 * N_COLORS,))
    return np.concatenate([image, flat], axis=-1)


def split(X):
    """Inverse of :func:`stack`; returns ``(image, grads)`` as new arrays."""
    X = check_joint_tensor(X)
    image = X[..., :N_COLORS].copy()
    grads = X[..., N_COLORS:].reshape(X.shape[:-1] + (2, N_COLORS)).copy()
    return image, grads
