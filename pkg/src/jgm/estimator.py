"""scikit-learn style wrapper around training and guided sampling."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import forward
from .checkpoint import read_checkpoint, write_checkpoint
from .sampler import SamplerConfig, colorize, sample_prior
from .schedule import NoiseSchedule
from .tensors import N_COLORS, N_JOINT, ShapeError
from .training import DsmConfig, train


def check_color_batch(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != N_COLORS:
        raise ShapeError(f"expected color images (N, H, W, 3), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain non-finite values")
    return X


def check_gray_batch(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim not in (2, 3):
        raise ShapeError(f"expected gray image(s) (H, W) or (N, H, W), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("gray images contain non-finite values")
    return y


class JGMColorizer(BaseEstimator, TransformerMixin):
    """Joint intensity-gradient score prior with guided Langevin colorization.

    ``fit`` trains the 9-channel score network on color images;
    ``transform`` (alias ``predict``) colorizes gray images.

    Parameters
    ----------
    operator : {"average", "luma"}
        Forward model assumed when colorizing.
    sigma_max, sigma_min, n_levels : float, float, int
        Geometric noise ladder shared by training and sampling.
    step_scale, n_steps : float, int
        Langevin step scale and steps per level.
    dc_weight, merge_weight : float
        Data-consistency weight and screened-Poisson merge weight.
    dc_schedule : {"constant", "matched"}
        Level dependence of the data-consistency weight.
    gradient_on : bool
        Enable the gradient-domain data term.
    width, depth, n_iter, batch_size, learning_rate : training settings
    dtype : {"float32", "float64"}
        Network compute precision.
    seed : int
    """

    def __init__(
        self,
        operator="average",
        sigma_max=1.0,
        sigma_min=0.01,
        n_levels=10,
        step_scale=2e-5,
        n_steps=100,
        dc_weight=1.0,
        merge_weight=1.0,
        dc_schedule="constant",
        gradient_on=True,
        width=32,
        depth=5,
        n_iter=3000,
        batch_size=16,
        learning_rate=2e-3,
        dtype="float32",
        seed=0,
    ):
        self.operator = operator
        self.sigma_max = sigma_max
        self.sigma_min = sigma_min
        self.n_levels = n_levels
        self.step_scale = step_scale
        self.n_steps = n_steps
        self.dc_weight = dc_weight
        self.merge_weight = merge_weight
        self.dc_schedule = dc_schedule
        self.gradient_on = gradient_on
        self.width = width
        self.depth = depth
        self.n_iter = n_iter
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.dtype = dtype
        self.seed = seed

    def _schedule(self):
        sigmas = getattr(self, "sigmas_", None)
        if sigmas is not None:
            return NoiseSchedule(sigmas, self.step_scale, self.n_steps)
        return NoiseSchedule.geometric(
            self.sigma_max, self.sigma_min, self.n_levels, self.step_scale, self.n_steps
        )

    def sampler_config(self, seed=None):
        return SamplerConfig(
            schedule=self._schedule(),
            dc_weight=self.dc_weight,
            merge_weight=self.merge_weight,
            dc_schedule=self.dc_schedule,
            gradient_on=self.gradient_on,
            seed=self.seed if seed is None else seed,
        )

    def fit(self, X, y=None):
        """Train the score network on color images ``X`` of shape (N, H, W, 3)."""
        forward.get_operator(self.operator)
        X = check_color_batch(X)
        self.sigmas_ = None
        config = DsmConfig(
            schedule=self._schedule(),
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            n_iter=self.n_iter,
            seed=self.seed,
            width=self.width,
            depth=self.depth,
            dtype=self.dtype,
            log_every=0,
        )
        self.model_ = train(config, X)
        self.loss_history_ = list(self.model_.history)
        return self

    def transform(self, y, seed=None):
        """Colorize gray image(s); returns images clipped to [0, 1]."""
        check_is_fitted(self, "model_")
        y = check_gray_batch(y)
        trace = colorize(y, self.model_, self.operator, self.sampler_config(seed))
        self.trace_ = trace
        return np.clip(trace.image, 0.0, 1.0)

    def predict(self, y, seed=None):
        return self.transform(y, seed=seed)

    def sample(self, n_samples, height, width, seed=None):
        """Unconditional draws of the joint prior, intensity part only."""
        check_is_fitted(self, "model_")
        trace = sample_prior(
            self.model_, self.sampler_config(seed), (n_samples, height, width, N_JOINT)
        )
        return trace.image

    def save(self, path):
        check_is_fitted(self, "model_")
        write_checkpoint(path, self.model_)

    @classmethod
    def from_checkpoint(cls, path, **params):
        """Build a fitted estimator from a checkpoint; the noise ladder comes from the file."""
        model = read_checkpoint(path)
        sig = model.schedule.sigmas
        params.setdefault("sigma_max", sig[0])
        params.setdefault("sigma_min", sig[-1])
        params.setdefault("n_levels", len(sig))
        est = cls(**params)
        est.sigmas_ = tuple(sig)  # the stored ladder wins over the params
        est.model_ = model
        est.loss_history_ = []
        return est
