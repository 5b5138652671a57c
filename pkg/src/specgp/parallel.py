from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from .config import thread_count

T = TypeVar("T")
R = TypeVar("R")


def thread_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    threads: int | None = None,
) -> list[R]:
    """Apply ``fn`` to every item on a thread pool, results in input order."""
    items = list(items)
    threads = min(threads or thread_count(), len(items))
    if threads <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="specgp") as pool:
        # map() preserves input order, so reductions over the result are fixed.
        return list(pool.map(fn, items))


def chunks(n: int, size: int) -> list[slice]:
    """Split ``range(n)`` into contiguous slices of at most ``size``."""
    size = max(int(size), 1)
    return [slice(start, min(start + size, n)) for start in range(0, n, size)]
