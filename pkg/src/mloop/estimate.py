"""Monte Carlo result record."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .parallel import Moments


@dataclass(frozen=True)
class Estimate:
    """Complex mean with per-component standard errors.

    ``stderr`` is the standard error of the complex mean (real and imaginary
    fluctuations combined); ``stderr_re`` and ``stderr_im`` split it.
    """

    mean: np.ndarray | complex
    stderr: np.ndarray | float
    stderr_re: np.ndarray | float
    stderr_im: np.ndarray | float
    n_samples: int
    seed: int
    wall_time: float = 0.0

    @classmethod
    def from_moments(cls, m: Moments, seed: int, wall_time: float = 0.0) -> "Estimate":
        def unwrap(a):
            a = np.asarray(a)
            return a.item() if a.ndim == 0 else a

        return cls(
            unwrap(m.mean), unwrap(m.stderr), unwrap(m.stderr_re), unwrap(m.stderr_im), m.n, seed, wall_time
        )

    def to_dict(self) -> dict:
        mean = np.asarray(self.mean)
        return {
            "mean_re": mean.real.tolist(),
            "mean_im": mean.imag.tolist(),
            "stderr": np.asarray(self.stderr).tolist(),
            "stderr_re": np.asarray(self.stderr_re).tolist(),
            "stderr_im": np.asarray(self.stderr_im).tolist(),
            "n_samples": self.n_samples,
            "seed": self.seed,
        }
