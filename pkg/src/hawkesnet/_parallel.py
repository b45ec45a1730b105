"""Deterministic thread-pool plumbing.

Parallel sections in this package are order-preserving maps over
independent tasks. Each task owns its inputs (and its own seed stream
when it is stochastic), and results are merged positionally, so the
output is identical whatever the worker count. The module-level cap is
set once by the command line layer; library callers can pass an
explicit ``threads`` instead.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from .errors import DomainError

__all__ = ["default_threads", "get_thread_cap", "pmap", "set_thread_cap"]

_T = TypeVar("_T")
_R = TypeVar("_R")

_cap: int | None = None


def default_threads() -> int:
    """Available parallelism, at least 1."""
    return max(1, os.cpu_count() or 1)


def set_thread_cap(threads: int | None) -> None:
    """Set the process-wide worker cap (None restores the default)."""
    global _cap
    if threads is not None and threads < 1:
        raise DomainError("thread cap must be at least 1")
    _cap = threads


def get_thread_cap() -> int:
    return _cap if _cap is not None else default_threads()


def pmap(
    fn: Callable[[_T], _R], items: Iterable[_T], threads: int | None = None
) -> list[_R]:
    """Map ``fn`` over ``items``, preserving order.

    Runs sequentially when the effective worker count is 1 or when
    there is only one item; otherwise fans out to a thread pool. Both
    paths produce the same list.
    """
    seq = list(items)
    workers = threads if threads is not None else get_thread_cap()
    if workers < 1:
        raise DomainError("thread count must be at least 1")
    if workers == 1 or len(seq) <= 1:
        return [fn(item) for item in seq]
    with ThreadPoolExecutor(max_workers=min(workers, len(seq))) as pool:
        return list(pool.map(fn, seq))
