from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Ensemble:
    """J particles in R^L at pseudo-time ``time``; ``particles`` has shape (J, L)."""

    particles: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        p = np.array(self.particles, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 2:
            raise ValueError("an ensemble needs at least two particles, shape (J, L)")
        if not np.all(np.isfinite(p)):
            raise ValueError("ensemble contains non-finite particles")
        p.setflags(write=False)
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "time", float(self.time))

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        return self.particles.shape[1]

    def mean(self) -> np.ndarray:
        return self.particles.mean(axis=0)

    def cov(self) -> np.ndarray:
        """Particle covariance with 1/J normalization."""
        d = self.particles - self.mean()
        return d.T @ d / self.size
