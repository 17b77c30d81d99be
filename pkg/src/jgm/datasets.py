"""Synthetic color-image families and patch extraction."""

import enum
from dataclasses import dataclass

import numpy as np

from .tensors import check_color_image

# gray averages 0.2, 0.3, ..., 0.7 along a dark-red-to-yellow ramp: gray
# identifies the color, and colors adjacent in gray are adjacent in chroma
PALETTE = np.array(
    [
        [0.35, 0.05, 0.20],
        [0.60, 0.10, 0.20],
        [0.80, 0.25, 0.15],
        [0.90, 0.45, 0.15],
        [0.95, 0.65, 0.20],
        [0.95, 0.85, 0.30],
    ]
)


class Family(str, enum.Enum):
    PIECEWISE_CONSTANT = "piecewise"
    SMOOTH = "smooth"
    GAUSSIAN = "gaussian"


@dataclass
class SyntheticSpec:
    """What to generate.

    Parameters
    ----------
    family : Family or str
    height, width : int
    count : int
    seed : int
    n_regions : int or (int, int)
        Piecewise family: number of regions, the first being the full-frame
        background. A pair draws uniformly from the inclusive range.
    palette : array, shape (K, 3), optional
        Piecewise family colors; defaults to :data:`PALETTE`.
    jitter : float
        Uniform per-region color perturbation (clipped to [0, 1]).
    prior : AnalyticGaussian, optional
        Required for the Gaussian family; its event shape must be
        ``(height, width, 3)``.
    """

    family: Family = Family.PIECEWISE_CONSTANT
    height: int = 32
    width: int = 32
    count: int = 2000
    seed: int = 0
    n_regions: object = (2, 6)
    palette: np.ndarray = None
    jitter: float = 0.0
    prior: object = None

    def __post_init__(self):
        self.family = Family(self.family)
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.height < 1 or self.width < 1:
            raise ValueError("height and width must be positive")


def _piecewise(spec, rng, with_labels=False):
    palette = PALETTE if spec.palette is None else np.asarray(spec.palette, dtype=np.float64)
    lo, hi = (spec.n_regions, spec.n_regions) if np.isscalar(spec.n_regions) else spec.n_regions
    n = int(rng.integers(lo, hi + 1))
    H, W = spec.height, spec.width

    def color():
        c = palette[rng.integers(len(palette))]
        if spec.jitter:
            c = np.clip(c + rng.uniform(-spec.jitter, spec.jitter, 3), 0.0, 1.0)
        return c

    labels = np.zeros((H, W), dtype=np.int64)
    colors = [color()]
    for k in range(1, n):
        r0, r1 = sorted(rng.integers(0, H, size=2))
        c0, c1 = sorted(rng.integers(0, W, size=2))
        labels[r0 : r1 + 1, c0 : c1 + 1] = k
        colors.append(color())
    img = np.stack(colors)[labels]
    return (img, labels) if with_labels else img


def piecewise_with_labels(spec):
    """Piecewise-constant images together with their rectangle label maps."""
    out = []
    for ss in np.random.SeedSequence(spec.seed).spawn(spec.count):
        out.append(_piecewise(spec, np.random.default_rng(ss), with_labels=True))
    return out


def _smooth(spec, rng):
    u = np.linspace(0.0, 1.0, spec.height)[:, None, None]
    v = np.linspace(0.0, 1.0, spec.width)[None, :, None]
    start = rng.uniform(0.0, 1.0, 3)
    du = rng.uniform(-1.0, 1.0, 3)
    dv = rng.uniform(-1.0, 1.0, 3)
    return np.clip(start + du * u + dv * v, 0.0, 1.0)


def generate(spec):
    """Yield ``spec.count`` images, each seeded from ``spec.seed`` and its index."""
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.count)
    if spec.family is Family.GAUSSIAN:
        if spec.prior is None:
            raise ValueError("the Gaussian family needs a prior")
        if spec.prior.event_shape != (spec.height, spec.width, 3):
            raise ValueError(f"prior event shape {spec.prior.event_shape} != image size")
    for ss in seeds:
        rng = np.random.default_rng(ss)
        if spec.family is Family.PIECEWISE_CONSTANT:
            yield _piecewise(spec, rng)
        elif spec.family is Family.SMOOTH:
            yield _smooth(spec, rng)
        else:
            yield spec.prior.sample(1, rng)[0]


def generate_array(spec):
    return np.stack(list(generate(spec)))


def patch_count(height, width, patch, stride):
    return ((height - patch) // stride + 1) * ((width - patch) // stride + 1)


def extract_patches(images, patch, stride=None, seed=None):
    """Tile each image into ``patch x patch`` crops at the given stride.

    Patches come out in raster order per image; with ``seed`` the full
    list is shuffled deterministically.
    """
    stride = stride or patch
    if patch < 1 or stride < 1:
        raise ValueError("patch and stride must be positive")
    out = []
    for img in images:
        img = check_color_image(img)
        H, W = img.shape[:2]
        if patch > H or patch > W:
            raise ValueError(f"patch {patch} larger than image {H}x{W}")
        for r in range(0, H - patch + 1, stride):
            for c in range(0, W - patch + 1, stride):
                out.append(img[r : r + patch, c : c + patch].copy())
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(out))
        out = [out[i] for i in order]
    return iter(out)
