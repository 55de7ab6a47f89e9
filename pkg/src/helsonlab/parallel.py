"""Replica scheduling with worker-count-independent results.

Work is cut into chunks of a fixed size that does not depend on the number of
workers, each chunk is a pure function of its replica indices, and results are
concatenated in chunk order. Reductions then run over the full per-replica
array, so the output is identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from .config import worker_count


def map_replicas(fn: Callable[[np.ndarray], np.ndarray], replicas: int, chunk: int,
                 workers: int | None = None) -> np.ndarray:
    """Apply ``fn`` to consecutive index chunks and stack the rows in index order."""
    bounds = [(lo, min(replicas, lo + chunk)) for lo in range(0, replicas, chunk)]
    jobs = [np.arange(lo, hi, dtype=np.int64) for lo, hi in bounds]
    n = worker_count(workers)
    if n == 1 or len(jobs) == 1:
        parts = [fn(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(fn, jobs))
    return np.concatenate(parts, axis=0)
