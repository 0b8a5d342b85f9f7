"""Thread-pool mapping capped by ``TOOTHSPARSE_THREADS`` (0 or unset = auto).

Nested calls from inside a worker run serially so pools never multiply.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor

from .errors import DataError

_local = threading.local()


def thread_count() -> int:
    raw = os.environ.get("TOOTHSPARSE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise DataError(f"TOOTHSPARSE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise DataError("TOOTHSPARSE_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _in_worker(fn):
    def run(x):
        _local.busy = True
        try:
            return fn(x)
        finally:
            _local.busy = False
    return run


def ordered_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, possibly concurrent; results keep input order."""
    items = list(items)
    n = thread_count() if threads is None else threads
    if n <= 1 or len(items) <= 1 or getattr(_local, "busy", False):
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(_in_worker(fn), items))
