"""Annealed Langevin colorization in the joint intensity-gradient space.

Each step updates the 9-channel state ``X = [x, grad x]`` as::

    X <- X + alpha_i / 2 * (s(X, sigma_i) - lam * DC(X)) + sqrt(alpha_i) * z

where ``DC`` stacks ``F^T (F x - y)`` on the intensity channels and
``F^T (F grad x - grad y)`` on the gradient channels. After the inner loop
of each level, the intensity and gradient channels are fused by
:func:`jgm.merge.merge` and the gradient channels are recomputed from the
fused image.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import forward
from .gradients import grad, grad_scalar
from .merge import merge
from .metrics import psnr
from .schedule import NoiseSchedule
from .tensors import N_COLORS, N_JOINT, ShapeError, check_gray_image, split, stack


class SamplerDivergence(FloatingPointError):
    """The chain produced non-finite values (step size or DC weight too large)."""


DC_SCHEDULES = ("constant", "matched")


def default_sampler_schedule():
    return NoiseSchedule.geometric(1.0, 0.01, 10, step_scale=2e-5, n_steps=100)


@dataclass
class SamplerConfig:
    """Sampler settings; every field is echoed into the run trace.

    ``dc_weights`` overrides ``dc_weight`` per block (intensity, gradient)
    and is what the separated-model variant uses. ``dc_schedule`` is
    ``"constant"`` (the same weight on every level) or ``"matched"``, which
    uses ``lam * sigma_L**2 / sigma_i**2`` on level ``i`` so that the
    data-consistency step ``alpha_i * lam_i`` does not shrink with the noise.
    """

    schedule: NoiseSchedule = field(default_factory=default_sampler_schedule)
    dc_weight: float = 1.0
    dc_weights: tuple = None
    intensity_on: bool = True
    gradient_on: bool = True
    merge_weight: float = 1.0
    merge_tol: float = 1e-8
    seed: int = 0
    snapshot_every: int = None
    recouple_every_step: bool = False
    dc_schedule: str = "constant"

    def __post_init__(self):
        weights = [self.dc_weight, self.merge_weight]
        if self.dc_weights is not None:
            self.dc_weights = tuple(float(w) for w in self.dc_weights)
            if len(self.dc_weights) != 2:
                raise ValueError("dc_weights must be an (intensity, gradient) pair")
            weights += list(self.dc_weights)
        for w in weights:
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"weights must be finite and nonnegative, got {w}")
        if self.dc_schedule not in DC_SCHEDULES:
            raise ValueError(f"dc_schedule must be one of {DC_SCHEDULES}, got {self.dc_schedule!r}")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be a positive integer")

    @property
    def block_weights(self):
        if self.dc_weights is not None:
            return self.dc_weights
        return (float(self.dc_weight), float(self.dc_weight))

    def to_dict(self):
        out = asdict(self)
        out["schedule"] = asdict(self.schedule)
        return out


@dataclass
class Snapshot:
    level: int
    sigma: float
    state: np.ndarray
    image: np.ndarray
    psnr: float = None


@dataclass
class SamplerTrace:
    """Result of one sampler run.

    ``image`` is the last merged image, unclamped. ``residuals`` has one
    entry per level with the max-abs and RMS data residual after merging.
    """

    image: np.ndarray
    state: np.ndarray
    snapshots: list
    residuals: list
    seed: int
    config: dict
    operator: str = None


def _channel_weights(config):
    lam_i, lam_g = config.block_weights
    if lam_i == lam_g:
        return lam_i
    return np.array([lam_i] * N_COLORS + [lam_g] * (N_JOINT - N_COLORS))


def data_consistency(X, y, op, grad_y, intensity_on=True, gradient_on=True):
    """Assemble the 9-channel DC direction; masked blocks are exactly zero."""
    image, grads = split(X)
    dc = np.zeros_like(X)
    if intensity_on:
        dc[..., :N_COLORS] = forward.dc_intensity(op, image, y)
    if gradient_on:
        dg = forward.dc_gradient(op, grads, y, grad_y=grad_y)
        dc[..., N_COLORS:] = dg.reshape(dg.shape[:-2] + (N_JOINT - N_COLORS,))
    return dc


def _update(X, s, dc, lam, alpha, z):
    # overflow is caught by _check_finite with a clearer message
    with np.errstate(over="ignore", invalid="ignore"):
        return X + (alpha / 2) * (s - lam * dc) + np.sqrt(alpha) * z


def _check_finite(X, level, sigma, alpha):
    if not np.all(np.isfinite(X)):
        raise SamplerDivergence(
            f"non-finite state at level {level} (sigma={sigma:g}, alpha={alpha:g}); "
            "reduce the step scale or the data-consistency weight"
        )


def langevin_step(X, model, level, config, y, op, rng, grad_y=None):
    """One guided Langevin update at noise level index ``level``.

    ``rng`` only needs a ``standard_normal(shape)`` method. ``model`` may be
    ``None`` for pure data-consistency descent.
    """
    schedule = config.schedule
    sigma = schedule.sigmas[level] if 0 <= level < schedule.n_levels else None
    if sigma is None:
        raise IndexError(f"level {level} outside [0, {schedule.n_levels})")
    alpha = schedule.step_size(level)
    if grad_y is None:
        grad_y = grad_scalar(y)
    s = model.score(X, sigma) if model is not None else np.zeros_like(X)
    dc = data_consistency(X, y, op, grad_y, config.intensity_on, config.gradient_on)
    z = rng.standard_normal(X.shape)
    lam = _channel_weights(config)
    if config.dc_schedule == "matched":
        # lam_i * alpha_i stays at lam * alpha_L on every level
        lam = lam * (schedule.sigmas[-1] / sigma) ** 2
    out = _update(X, s, dc, lam, alpha, z)
    _check_finite(out, level, sigma, alpha)
    return out


def recouple(X):
    """Replace the gradient channels by the gradient of the intensity channels."""
    image, _ = split(X)
    return stack(image, grad(image))


def _run_guided(y, model, op, config, reference):
    op = forward.get_operator(op)
    y = check_gray_image(y)
    if getattr(model, "channels", N_JOINT) != N_JOINT:
        raise ShapeError(f"score model must have {N_JOINT} channels, got {model.channels}")
    if reference is not None and np.shape(reference) != y.shape + (N_COLORS,):
        raise ShapeError(f"reference {np.shape(reference)} does not match {y.shape}")
    schedule = config.schedule
    rng = np.random.default_rng(config.seed)
    grad_y = grad_scalar(y)

    x0 = schedule.sigmas[0] * rng.standard_normal(y.shape + (N_COLORS,))
    X = stack(x0, grad(x0))
    image = x0
    snapshots, residuals = [], []
    for level, sigma in enumerate(schedule.sigmas):
        for _ in range(schedule.n_steps):
            X = langevin_step(X, model, level, config, y, op, rng, grad_y=grad_y)
            if config.recouple_every_step:
                X = recouple(X)
        x_chain, g_chain = split(X)
        image = merge(x_chain, g_chain, config.merge_weight, tol=config.merge_tol)
        X = stack(image, grad(image))

        r = forward.apply(op, image) - y
        residuals.append(
            {
                "level": level,
                "sigma": sigma,
                "alpha": schedule.step_size(level),
                "max_abs": float(np.max(np.abs(r))),
                "rms": float(np.sqrt(np.mean(r**2))),
            }
        )
        if config.snapshot_every and (level + 1) % config.snapshot_every == 0:
            score_db = None
            if reference is not None:
                score_db = psnr(np.clip(image, 0, 1), reference)
            snapshots.append(Snapshot(level, sigma, X.copy(), image.copy(), score_db))

    return SamplerTrace(image, X, snapshots, residuals, config.seed, config.to_dict(), op.name)


def colorize(y, model, op, config=None, reference=None):
    """Colorize gray image(s) ``y`` of shape ``(..., H, W)``.

    Leading axes are independent chains sharing one random stream, so a
    batch run is deterministic but not equal to separate single runs.

    Parameters
    ----------
    y : array, shape (..., H, W)
    model : score model with ``channels == 9``
    op : ForwardOperator or name
    config : SamplerConfig, optional
    reference : array, optional
        Ground truth used only to annotate snapshots with PSNR.
    """
    config = config or SamplerConfig()
    return _run_guided(y, model, op, config, reference)


class BlockScore:
    """Joint score assembled from an intensity model and a gradient model."""

    channels = N_JOINT

    def __init__(self, image_model, gradient_model):
        if getattr(image_model, "channels", N_COLORS) != N_COLORS:
            raise ShapeError(f"image model must have 3 channels, got {image_model.channels}")
        if getattr(gradient_model, "channels", 6) != N_JOINT - N_COLORS:
            raise ShapeError(
                f"gradient model must have 6 channels, got {gradient_model.channels}"
            )
        self.image_model = image_model
        self.gradient_model = gradient_model

    def score(self, X, sigma):
        s_img = self.image_model.score(X[..., :N_COLORS], sigma)
        s_grad = self.gradient_model.score(X[..., N_COLORS:], sigma)
        return np.concatenate([s_img, s_grad], axis=-1)


def colorize_divided(y, image_model, gradient_model, op, config=None, reference=None):
    """Colorize with separately trained intensity and gradient priors.

    The intensity block moves under ``image_model`` with weight
    ``dc_weights[0]`` and the gradient block under ``gradient_model`` with
    ``dc_weights[1]``; merging and recoupling follow :func:`colorize`.
    """
    config = config or SamplerConfig()
    return _run_guided(y, BlockScore(image_model, gradient_model), op, config, reference)


def sample_prior(model, config=None, shape=None):
    """Unconditional annealed Langevin sampling (no data term, no merge).

    Parameters
    ----------
    shape : tuple
        Full state shape ``(..., H, W, C)``; leading axes are independent
        chains.

    Returns
    -------
    SamplerTrace
        ``state`` holds the final chain values; ``image`` is its intensity
        part when ``C == 9``.
    """
    config = config or SamplerConfig()
    if shape is None or len(shape) < 3:
        raise ShapeError("shape must be (..., H, W, C)")
    schedule = config.schedule
    rng = np.random.default_rng(config.seed)
    X = schedule.sigmas[0] * rng.standard_normal(shape)
    snapshots = []
    for level, sigma in enumerate(schedule.sigmas):
        alpha = schedule.step_size(level)
        for _ in range(schedule.n_steps):
            s = model.score(X, sigma)
            X = X + (alpha / 2) * s + np.sqrt(alpha) * rng.standard_normal(X.shape)
            _check_finite(X, level, sigma, alpha)
        if config.snapshot_every and (level + 1) % config.snapshot_every == 0:
            snapshots.append(Snapshot(level, sigma, X.copy(), X[..., :N_COLORS].copy()))
    image = X[..., :N_COLORS] if shape[-1] == N_JOINT else X
    return SamplerTrace(image, X, snapshots, [], config.seed, config.to_dict())
