from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Decreasing noise levels with the annealed step rule.

    The step at level ``i`` is ``step_scale * sigma_i**2 / sigma_L**2``.

    Parameters
    ----------
    sigmas : tuple of float
        Strictly decreasing, all positive.
    step_scale : float
        Step size used at the last (smallest) level.
    n_steps : int
        Langevin steps per level.
    """

    sigmas: tuple
    step_scale: float = 2e-5
    n_steps: int = 100

    def __post_init__(self):
        sig = np.asarray(self.sigmas, dtype=np.float64)
        if sig.ndim != 1 or sig.size == 0:
            raise ValueError("sigmas must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
            raise ValueError("sigmas must be finite and positive")
        if np.any(np.diff(sig) >= 0):
            raise ValueError("sigmas must be strictly decreasing")
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        object.__setattr__(self, "sigmas", tuple(float(s) for s in sig))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def geometric(cls, sigma_max=1.0, sigma_min=0.01, n_levels=10, step_scale=2e-5, n_steps=100):
        if n_levels == 1:
            sigmas = (sigma_min,)
        else:
            sigmas = np.geomspace(sigma_max, sigma_min, n_levels)
        return cls(tuple(sigmas), step_scale, n_steps)

    @property
    def n_levels(self):
        return len(self.sigmas)

    def step_size(self, level):
        if not 0 <= level < self.n_levels:
            raise IndexError(f"level {level} outside [0, {self.n_levels})")
        return self.step_scale * self.sigmas[level] ** 2 / self.sigmas[-1] ** 2

    @property
    def step_sizes(self):
        return np.array([self.step_size(i) for i in range(self.n_levels)])
