"""Seeded, splittable random streams.

Every Monte Carlo path owns its own generator derived from
``SeedSequence(seed, spawn_key=(stream_id, path_index))``, so results do not
depend on how paths are batched or distributed across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RandomStream", "ZeroStream"]


@dataclass(frozen=True)
class RandomStream:
    """A reproducible source of randomness.

    Parameters
    ----------
    seed : int
        Root 64-bit seed.
    stream_id : int
        Independent stream index (one per worker or per experiment).
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be nonnegative")

    def seed_sequence(self, *key: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + tuple(int(k) for k in key))

    def generator(self, *key: int) -> np.random.Generator:
        """Generator for this stream, optionally for a sub-key such as a path index."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence(*key)))

    def path_generators(self, start: int, stop: int):
        """Generators for path indices ``start .. stop-1``."""
        return [self.generator(i) for i in range(start, stop)]

    def substream(self, stream_id: int) -> "RandomStream":
        return RandomStream(self.seed, stream_id)


class _ZeroGenerator:
    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return loc if size is None else np.full(size, loc, dtype=float)


class ZeroStream:
    """Stub stream whose Gaussian draws are all zero (deterministic tests)."""

    seed = 0
    stream_id = 0

    def generator(self, *key):
        return _ZeroGenerator()
