"""Deterministic chunked parallel map.

Work is split into chunks whose boundaries depend only on the input size and
the chunk size, never on the worker count, and results are gathered in chunk
order.  Outputs are therefore identical for any degree of parallelism.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

WORKERS_ENV = "PHLAB_WORKERS"
DEFAULT_CHUNK = 16


def default_workers():
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def chunk_bounds(n, chunk=DEFAULT_CHUNK):
    return [(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def map_chunks(fn, arrays, workers=1, chunk=DEFAULT_CHUNK):
    """Apply ``fn`` to row chunks of ``arrays`` (a tuple sharing the first axis).

    Returns the list of per-chunk results in order.
    """
    n = len(arrays[0])
    parts = [tuple(a[lo:hi] for a in arrays) for lo, hi in chunk_bounds(n, chunk)]
    if workers <= 1 or len(parts) <= 1:
        return [fn(*p) for p in parts]
    with ProcessPoolExecutor(max_workers=int(workers)) as ex:
        return list(ex.map(fn, *zip(*parts)))


def seed_rng(root_seed, index):
    """Independent generator for stream ``index`` under ``root_seed``."""
    return np.random.default_rng([int(root_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


SEED_BLOCK = 1024


def uniform_seeds(root_seed, n, stream=0):
    """``n`` Lebesgue-random points.

    Rows come in fixed blocks of SEED_BLOCK, block k drawn from the stream
    (root_seed, stream, k); any row therefore depends only on its index.
    """
    root = int(root_seed) & 0xFFFFFFFFFFFFFFFF
    out = np.empty((int(n), 3))
    for k, lo in enumerate(range(0, int(n), SEED_BLOCK)):
        hi = min(lo + SEED_BLOCK, int(n))
        out[lo:hi] = np.random.default_rng([root, int(stream), k]).random((SEED_BLOCK, 3))[: hi - lo]
    return out
