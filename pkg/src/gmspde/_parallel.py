"""Deterministic fan-out over ensemble members.

Results are keyed by index so the reduction is invariant under worker
count and scheduling.  GMSPDE_THREADS caps the pool (0 or unset = auto).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    raw = os.environ.get("GMSPDE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 0:
        raise ValueError(f"GMSPDE_THREADS must be >= 0, got {raw!r}")
    if n == 0:
        n = min(os.cpu_count() or 1, 8)
    return n


def map_indexed(fn, indices):
    """[fn(i) for i in indices], evaluated concurrently, order preserved."""
    indices = list(indices)
    n_workers = min(worker_count(), max(len(indices), 1))
    if n_workers <= 1 or len(indices) <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, indices))
