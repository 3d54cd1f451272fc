"""Deterministic fan-out of per-path Monte Carlo work.

Work functions have the signature ``func(seed, stream_id, start, stop, **kw)``
and return one row per path index in ``[start, stop)``.  Because every path
draws from its own generator (keyed by its index), the concatenated result is
identical for any batch size or worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

ENV_WORKERS = "SLELAB_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(ENV_WORKERS, "1")))
    except ValueError:
        return 1


def run_paths(func, n: int, stream, workers: int | None = None, batch: int | None = None, **kw) -> np.ndarray:
    n = int(n)
    if n < 1:
        raise ValueError("need at least one path")
    workers = default_workers() if workers is None else max(1, int(workers))
    if batch is None:
        batch = max(1, min(2000, -(-n // (4 * workers))))
    chunks = [(i, min(i + batch, n)) for i in range(0, n, batch)]
    job = partial(func, int(stream.seed), int(stream.stream_id), **kw)
    if workers == 1 or len(chunks) == 1:
        parts = [job(a, b) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, *zip(*chunks)))
    return np.concatenate(parts, axis=0)
