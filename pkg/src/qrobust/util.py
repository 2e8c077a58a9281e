"""Small shared utilities: worker pool sizing and order-preserving maps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Worker cap from QROBUST_THREADS (0 or unset = auto)."""
    raw = os.environ.get("QROBUST_THREADS", "").strip()
    if not raw or raw == "0":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, items):
    """Map preserving order; threads only when it can possibly help.

    Tasks must be independent; results are keyed by position so the output
    does not depend on scheduling.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
