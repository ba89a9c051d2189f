"""Deterministic chunked execution and compensated reductions.

Work is split into fixed-size particle chunks that do not depend on the
worker count; workers only decide which thread runs a chunk.  Results are
always gathered in chunk order, so output is identical for any pool size.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import kernels

CHUNK = 8192


def resolve_workers(workers=None):
    """Explicit value, else ``FKMC_WORKERS``, else 1."""
    if workers is None:
        env = os.environ.get("FKMC_WORKERS", "").strip()
        workers = int(env) if env else 1
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def chunk_ranges(n, size=CHUNK):
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def run_ordered(fn, tasks, workers=None):
    """``[fn(t) for t in tasks]``, optionally on a thread pool."""
    workers = resolve_workers(workers)
    tasks = list(tasks)
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def mean_and_se(values):
    """Mean and standard error (unbiased variance) via shifted Kahan sums.

    The shift by the first element makes a constant sample return that
    constant exactly with ``se == 0``.
    """
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0]
    if n == 0:
        return math.nan, math.nan
    shift = float(v[0])
    buf = np.subtract(v, shift)
    mean = shift + kernels.kahan_sum(buf) / n
    if n < 2:
        return mean, math.nan
    # one scratch buffer keeps memory flat for very large samples
    np.subtract(v, mean, out=buf)
    np.multiply(buf, buf, out=buf)
    var = kernels.kahan_sum(buf) / (n - 1)
    return mean, math.sqrt(var / n)
