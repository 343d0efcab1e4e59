"""Order-preserving thread fan-out used by the compute modules."""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "MICROLOC_THREADS"


def resolve_workers(threads: Optional[int] = None) -> int:
    """Worker count from an explicit value, then MICROLOC_THREADS; 0 means all cores."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            threads = int(raw)
        except ValueError:
            threads = 1
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Map fn over items, results in input order regardless of worker count."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
