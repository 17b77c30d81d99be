"""Noise-conditional score models.

Every model exposes ``channels`` and ``score(X, sigma)``, where ``X`` has
shape ``(..., H, W, channels)`` and the result has the same shape.
"""

import numpy as np
import torch
from torch import nn

from .schedule import NoiseSchedule


def score(model, X, level, schedule=None):
    """Score of ``model`` at noise level index ``level`` (0-based).

    ``schedule`` defaults to the model's own training schedule.
    """
    schedule = schedule if schedule is not None else getattr(model, "schedule", None)
    if schedule is None:
        raise ValueError("a noise schedule is required for level-indexed scores")
    if not 0 <= level < schedule.n_levels:
        raise IndexError(f"level {level} outside [0, {schedule.n_levels})")
    return model.score(X, schedule.sigmas[level])


class ZeroScore:
    """Flat prior; the sampler reduces to pure data-consistency descent."""

    def __init__(self, channels=9):
        self.channels = channels

    def score(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        return np.zeros_like(X)


class AnalyticGaussian:
    """Exact score of a Gaussian prior convolved with isotropic noise.

    ``score(X, sigma) = -(cov + sigma^2 I)^{-1} (X - mean)``, computed
    through one eigendecomposition so any ``sigma`` costs a matvec.

    Parameters
    ----------
    mean : array, shape (H, W, C)
        Event shape of the prior; channels are the last axis.
    cov : array
        Either a dense ``(n, n)`` symmetric positive-definite matrix over the
        flattened event (``n = H * W * C``, C-order), or a length-``n``
        vector of positive variances for a diagonal prior.
    """

    def __init__(self, mean, cov, schedule=None):
        self.mean = np.asarray(mean, dtype=np.float64)
        if self.mean.ndim != 3:
            raise ValueError(f"mean must have shape (H, W, C), got {self.mean.shape}")
        n = self.mean.size
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 1:
            if cov.shape != (n,) or np.any(cov <= 0):
                raise ValueError("diagonal covariance must hold n positive variances")
            self.eigvals, self.eigvecs = cov.copy(), None
        elif cov.shape == (n, n):
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
                raise ValueError("covariance must be symmetric")
            vals, vecs = np.linalg.eigh(cov)
            if vals.min() <= 0:
                raise ValueError("covariance must be positive definite")
            self.eigvals, self.eigvecs = vals, vecs
        else:
            raise ValueError(f"covariance shape {cov.shape} does not match event size {n}")
        self.cov = cov
        self.channels = self.mean.shape[-1]
        self.schedule = schedule

    @property
    def event_shape(self):
        return self.mean.shape

    @property
    def dim(self):
        return self.mean.size

    def _flat(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[X.ndim - 3 :] != self.event_shape:
            raise ValueError(f"expected (..., {self.event_shape}), got {X.shape}")
        return X.reshape(X.shape[: X.ndim - 3] + (self.dim,)) - self.mean.reshape(-1)

    def precision_apply(self, v, sigma):
        """``(cov + sigma^2 I)^{-1} v`` on flattened vectors ``(..., n)``."""
        inv = 1.0 / (self.eigvals + sigma**2)
        if self.eigvecs is None:
            return v * inv
        return ((v @ self.eigvecs) * inv) @ self.eigvecs.T

    def perturbed_cov(self, sigma):
        if self.eigvecs is None:
            return np.diag(self.eigvals + sigma**2)
        return self.cov + sigma**2 * np.eye(self.dim)

    def score(self, X, sigma):
        d = self._flat(X)
        return -self.precision_apply(d, sigma).reshape(np.shape(X))

    def log_density(self, X, sigma):
        """Unnormalized log density of the perturbed prior."""
        d = self._flat(X)
        return -0.5 * np.sum(d * self.precision_apply(d, sigma), axis=-1)

    def sample(self, n, rng, sigma=0.0):
        z = rng.standard_normal((n, self.dim))
        scale = np.sqrt(self.eigvals + sigma**2)
        if self.eigvecs is None:
            flat = z * scale
        else:
            flat = (z * scale) @ self.eigvecs.T
        return (flat + self.mean.reshape(-1)).reshape((n,) + self.event_shape)

    def marginal(self, channels):
        """Prior over a subset of channels (exact Gaussian marginal)."""
        channels = list(channels)
        idx = np.arange(self.dim).reshape(self.event_shape)[..., channels].reshape(-1)
        mean = self.mean[..., channels]
        if self.eigvecs is None:
            cov = self.eigvals[idx]
        else:
            cov = self.cov[np.ix_(idx, idx)]
        return AnalyticGaussian(mean, cov, schedule=self.schedule)


class ConvScoreNet(nn.Module):
    """Small residual stack of 3x3 convolutions, ``channels`` in and out.

    ``depth`` counts convolution layers. With ``depth == 1`` the network is
    a single ``channels -> channels`` convolution.
    """

    def __init__(self, channels=9, width=32, depth=4):
        super().__init__()
        if depth < 1 or width < 1 or channels < 1:
            raise ValueError("depth, width and channels must be positive")
        self.channels, self.width, self.depth = channels, width, depth
        if depth == 1:
            self.first = nn.Conv2d(channels, channels, 3, padding=1)
            self.hidden = nn.ModuleList()
            self.last = None
        else:
            self.first = nn.Conv2d(channels, width, 3, padding=1)
            self.hidden = nn.ModuleList(
                nn.Conv2d(width, width, 3, padding=1) for _ in range(depth - 2)
            )
            self.last = nn.Conv2d(width, channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x):
        h = self.first(x)
        if self.last is None:
            return h
        for conv in self.hidden:
            h = h + conv(self.act(h))
        return self.last(self.act(h))

    def n_params(self):
        return sum(p.numel() for p in self.parameters())


class NetScoreModel:
    """A trained network used as ``s(X, sigma) = net(X) / sigma``.

    One unconditional network serves every noise level; the ``1 / sigma``
    rescaling carries the conditioning.
    """

    def __init__(self, net, schedule, dtype=torch.float32, boundary_rule=0):
        self.net = net.to(dtype).eval()
        self.schedule = schedule
        self.dtype = dtype
        self.boundary_rule = int(boundary_rule)
        self.history = []

    @property
    def channels(self):
        return self.net.channels

    def raw(self, X):
        X = np.asarray(X, dtype=np.float64)
        lead = X.shape[:-3]
        flat = X.reshape((-1,) + X.shape[-3:])
        inp = torch.from_numpy(np.ascontiguousarray(flat.transpose(0, 3, 1, 2))).to(self.dtype)
        with torch.no_grad():
            out = self.net(inp)
        out = out.to(torch.float64).numpy().transpose(0, 2, 3, 1)
        return out.reshape(lead + X.shape[-3:])

    def score(self, X, sigma):
        return self.raw(X) / sigma

    def get_params(self):
        """Parameter vector as float64, in ``named_parameters`` order."""
        return torch.cat(
            [p.detach().to(torch.float64).reshape(-1) for p in self.net.parameters()]
        ).numpy()

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.net.n_params():
            raise ValueError(f"expected {self.net.n_params()} parameters, got {theta.size}")
        offset = 0
        with torch.no_grad():
            for p in self.net.parameters():
                n = p.numel()
                chunk = np.array(theta[offset : offset + n]).reshape(p.shape)
                p.copy_(torch.from_numpy(chunk).to(p.dtype))
                offset += n


def default_schedule():
    return NoiseSchedule.geometric(1.0, 0.01, 10)
