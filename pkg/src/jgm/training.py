"""Denoising score matching on intensity+gradient tensors."""

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .gradients import BOUNDARY_RULE, grad
from .schedule import NoiseSchedule
from .score import ConvScoreNet, NetScoreModel, default_schedule
from .tensors import check_color_image, stack

logger = logging.getLogger(__name__)

DOMAINS = {"joint": slice(0, 9), "image": slice(0, 3), "gradient": slice(3, 9)}


class TrainingError(RuntimeError):
    pass


def lift(images, domain="joint"):
    """Map color images ``(N, H, W, 3)`` to training tensors.

    ``domain`` selects all nine channels, the three intensity channels, or
    the six gradient channels (the last two serve the separated-model
    variant).
    """
    images = check_color_image(images)
    return stack(images, grad(images))[..., DOMAINS[domain]]


def dsm_loss(model, batch, sigma, noise):
    """Weighted denoising score matching loss at one noise level.

    Computes ``sigma^2 / 2 * mean_n ||s(X_n + sigma z_n, sigma) + z_n / sigma||^2``.

    Parameters
    ----------
    model : object with ``score(X, sigma)``
    batch : array, shape (N, H, W, C)
    sigma : float
    noise : array, shape (N, H, W, C)
        Standard normal draws ``z``.
    """
    batch = np.asarray(batch, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[0] == 0:
        raise ValueError("batch must be a non-empty (N, H, W, C) array")
    if noise.shape != batch.shape:
        raise ValueError(f"noise {noise.shape} must match batch {batch.shape}")
    s = model.score(batch + sigma * noise, sigma)
    per_sample = np.sum((s + noise / sigma) ** 2, axis=(1, 2, 3))
    return float(sigma**2 * 0.5 * per_sample.mean())


def multilevel_dsm_loss(model, batch, schedule, noise):
    """Level average of :func:`dsm_loss`; ``noise`` has one draw per level."""
    return float(
        np.mean([dsm_loss(model, batch, s, z) for s, z in zip(schedule.sigmas, noise)])
    )


def torch_dsm_loss(net, X, sigmas, z):
    """Same objective as :func:`dsm_loss` for a network score ``net(X) / sigma``.

    With the ``sigma^2`` weight the per-sample term reduces to
    ``0.5 * ||net(X + sigma z) + z||^2``. ``sigmas`` has shape ``(N, 1, 1, 1)``
    so every sample may carry its own level.
    """
    out = net(X + sigmas * z)
    return 0.5 * ((out + z) ** 2).sum(dim=(1, 2, 3)).mean()


@dataclass
class DsmConfig:
    """Training hyperparameters.

    ``optimizer`` is ``"adam"`` or ``"sgd"``; ``lr_halving`` halves the
    learning rate every that many iterations (0 disables it).
    """

    schedule: NoiseSchedule = field(default_factory=default_schedule)
    batch_size: int = 16
    learning_rate: float = 2e-3
    n_iter: int = 3000
    seed: int = 0
    width: int = 32
    depth: int = 5
    optimizer: str = "adam"
    lr_halving: int = 1000
    dtype: str = "float32"
    domain: str = "joint"
    log_every: int = 100

    def __post_init__(self):
        if self.batch_size < 1 or self.n_iter < 0:
            raise ValueError("batch_size must be >= 1 and n_iter >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unknown dtype {self.dtype!r}")

    @property
    def torch_dtype(self):
        return getattr(torch, self.dtype)


def _collect(dataset):
    images = [check_color_image(img) for img in dataset]
    if not images:
        raise ValueError("dataset is empty")
    shape = images[0].shape
    if shape[-1] != 3 or len(shape) != 3:
        raise ValueError("dataset must yield single (H, W, 3) images")
    for img in images:
        if img.shape != shape:
            raise ValueError(f"inconsistent image sizes: {shape} vs {img.shape}")
    return np.stack(images)


def train(config, dataset):
    """Fit a :class:`ConvScoreNet` to color images by denoising score matching.

    Each image is lifted to its joint tensor (or the block selected by
    ``config.domain``) before perturbation. See :func:`fit_score_net`.
    """
    images = _collect(dataset)
    return fit_score_net(lift(images, config.domain), config)


def fit_score_net(data, config):
    """Fit a score network to an ``(N, H, W, C)`` array of clean samples.

    Every sample in a batch draws its own noise level uniformly, which makes
    the batch loss an unbiased estimate of the level-averaged objective.
    Training is fully determined by ``config.seed``.

    Returns
    -------
    NetScoreModel
        With ``history`` holding the per-iteration loss.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 4:
        raise ValueError(f"training data must be (N, H, W, C), got {data.shape}")
    if len(data) < config.batch_size:
        raise ValueError(f"need at least {config.batch_size} samples, got {len(data)}")
    dtype = config.torch_dtype
    data = torch.from_numpy(np.ascontiguousarray(data.transpose(0, 3, 1, 2))).to(dtype)
    channels = data.shape[1]

    gen = torch.Generator().manual_seed(config.seed)
    torch.manual_seed(config.seed)
    net = ConvScoreNet(channels, config.width, config.depth).to(dtype)
    sigmas = torch.tensor(config.schedule.sigmas, dtype=dtype)

    if config.optimizer == "adam":
        opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    else:
        opt = torch.optim.SGD(net.parameters(), lr=config.learning_rate)
    sched = None
    if config.lr_halving:
        sched = torch.optim.lr_scheduler.StepLR(opt, step_size=config.lr_halving, gamma=0.5)

    history = []
    net.train()
    for it in range(config.n_iter):
        idx = torch.randint(len(data), (config.batch_size,), generator=gen)
        levels = torch.randint(len(sigmas), (config.batch_size,), generator=gen)
        X = data[idx]
        z = torch.randn(X.shape, generator=gen, dtype=dtype)
        loss = torch_dsm_loss(net, X, sigmas[levels].view(-1, 1, 1, 1), z)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(
                f"non-finite loss {value} at iteration {it}; lower the learning rate"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        if sched is not None:
            sched.step()
        history.append(value)
        if config.log_every and (it + 1) % config.log_every == 0:
            logger.info("iter %d loss %.4f", it + 1, np.mean(history[-config.log_every :]))

    model = NetScoreModel(net, config.schedule, dtype=dtype, boundary_rule=BOUNDARY_RULE)
    model.history = history
    return model
