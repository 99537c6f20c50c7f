"""Thread-pool map used for independent per-measure solves."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_default_threads = None


def set_default_threads(threads):
    """Set the worker count used when callers pass ``threads=None``."""
    global _default_threads
    _default_threads = None if threads is None else max(1, int(threads))


def resolve_threads(threads=None):
    if threads is None:
        threads = _default_threads if _default_threads is not None else os.cpu_count() or 1
    return max(1, int(threads))


def parallel_map(fn, items, threads=None):
    """``list(map(fn, items))``, spread over a thread pool when
    ``threads > 1``. Order is preserved."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
