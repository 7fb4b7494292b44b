"""Seed derivation and an order-preserving job map."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from a tuple of simple keys.

    Independent of ``PYTHONHASHSEED`` and of the process it runs in.
    """
    h = hashlib.sha256(repr(tuple(keys)).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def default_workers() -> int:
    return os.cpu_count() or 1


def map_jobs(fn: Callable[[T], R], jobs: Sequence[T] | Iterable[T], workers: int = 1) -> list[R]:
    """``[fn(j) for j in jobs]``, optionally on a process pool; result order follows ``jobs``."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, jobs))
