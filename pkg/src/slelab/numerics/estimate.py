"""Monte Carlo estimates with exact pooling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Estimate"]


@dataclass(frozen=True)
class Estimate:
    """Sample mean with standard error ``sd / sqrt(n)``.

    ``m2`` is the sum of squared deviations, kept so that estimates built
    on disjoint batches can be pooled exactly.
    """

    mean: float
    stderr: float
    n_samples: int
    seed: int | None = None
    config: dict = field(default_factory=dict)
    m2: float = 0.0

    @classmethod
    def from_samples(cls, samples, seed=None, config=None) -> "Estimate":
        s = np.asarray(samples, dtype=float).ravel()
        n = s.size
        if n < 2:
            raise ValueError("an estimate needs at least two samples")
        mean = float(np.mean(s))
        m2 = float(np.sum((s - mean) ** 2))
        return cls(mean, math.sqrt(m2 / (n - 1) / n), n, seed, dict(config or {}), m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n_samples - 1)

    def merge(self, other: "Estimate") -> "Estimate":
        """Pool two estimates (Chan et al. parallel variance update)."""
        n = self.n_samples + other.n_samples
        d = other.mean - self.mean
        mean = self.mean + d * other.n_samples / n
        m2 = self.m2 + other.m2 + d * d * self.n_samples * other.n_samples / n
        return Estimate(mean, math.sqrt(m2 / (n - 1) / n), n, self.seed, self.config, m2)

    def zscore(self, target: float) -> float:
        return (self.mean - target) / self.stderr if self.stderr > 0 else (0.0 if self.mean == target else math.inf)

    def agrees(self, other, k: float = 3.0) -> bool:
        """Whether two estimates (or an estimate and a number) agree within ``k`` combined stderr."""
        if isinstance(other, Estimate):
            se = math.hypot(self.stderr, other.stderr)
            return abs(self.mean - other.mean) <= k * se
        return abs(self.mean - float(other)) <= k * self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n_samples, "seed": self.seed,
                "config": self.config}
