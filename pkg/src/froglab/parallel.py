"""Worker pool sizing and order-preserving parallel map."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count(requested: int | None = None) -> int:
    """Workers to use: ``requested`` (or the CPU count), capped by FROGLAB_THREADS."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("FROGLAB_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"FROGLAB_THREADS must be a positive integer, got {cap!r}") from None
    return max(1, n)


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, run on a thread pool; results keep input order."""
    w = min(worker_count(workers), len(items))
    if w <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))
