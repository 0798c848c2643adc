"""Replicate fan-out over a thread pool.

The compiled kernels release the GIL, so threads give real parallelism.
Replicate ``i`` always uses RNG counter ``rep0 + i`` whatever the chunking, and
chunk outputs are concatenated in replicate order, so results do not depend
on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_WORKERS = 1
CHUNK = 20_000


def set_workers(n: int | None):
    global _WORKERS
    _WORKERS = max(1, int(n or os.cpu_count() or 1))


def get_workers() -> int:
    return _WORKERS


def map_replicates(fn, nrep: int, rep0: int = 0, chunk: int = CHUNK, workers: int | None = None):
    """Call ``fn(start, count)`` over consecutive replicate blocks; return outputs in order."""
    if nrep < 1:
        raise ValueError("replicates must be >= 1")
    blocks = [(rep0 + s, min(chunk, nrep - s)) for s in range(0, nrep, chunk)]
    w = get_workers() if workers is None else max(1, workers)
    if w == 1 or len(blocks) == 1:
        return [fn(a, n) for a, n in blocks]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(lambda b: fn(*b), blocks))


def sum_replicates(fn, nrep: int, rep0: int = 0, chunk: int = CHUNK, workers: int | None = None):
    """Integer-count reduction of ``fn(start, count)`` results (order independent)."""
    parts = map_replicates(fn, nrep, rep0, chunk, workers)
    total = parts[0].copy()
    for p in parts[1:]:
        total += p
    return total


def concat_replicates(fn, nrep: int, rep0: int = 0, chunk: int = CHUNK, workers: int | None = None):
    return np.concatenate(map_replicates(fn, nrep, rep0, chunk, workers))
