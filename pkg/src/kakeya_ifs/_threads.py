"""Thread-count resolution and an order-preserving parallel map."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "KAKEYA_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """KAKEYA_THREADS wins, then the explicit argument, then all cores."""
    env = os.environ.get(ENV_VAR)
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n > 0:
            return n
    if threads is not None and threads > 0:
        return int(threads)
    return os.cpu_count() or 1


def map_ordered(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Apply ``fn`` to every item; results come back in input order.

    Callers reduce the returned list in that fixed order, so the outcome does
    not depend on how many workers were used.
    """
    items = list(items)
    n = resolve_threads(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
