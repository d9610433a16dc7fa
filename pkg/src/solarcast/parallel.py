"""Bounded worker pool for independent per-pixel / per-frame jobs.

Results come back in submission order, so output never depends on which
worker finished first.
"""

from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

from threadpoolctl import threadpool_limits

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def _init_worker():
    # one BLAS thread per process: results must not depend on the pool size
    threadpool_limits(limits=1)


def map_ordered(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1:
        with threadpool_limits(limits=1):
            return [fn(x) for x in items]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=ctx,
                             initializer=_init_worker) as pool:
        return list(pool.map(fn, items))


def chunk_ranges(n: int, n_chunks: int) -> List[range]:
    n_chunks = max(1, min(n_chunks, n)) if n else 1
    bounds = [round(k * n / n_chunks) for k in range(n_chunks + 1)]
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def chunked(items: Iterable[T], size: int) -> List[List[T]]:
    out, cur = [], []
    for x in items:
        cur.append(x)
        if len(cur) == size:
            out.append(cur)
            cur = []
    if cur:
        out.append(cur)
    return out
