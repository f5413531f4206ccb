"""Deterministic worker-pool helpers.

Parallelism must never change results. Work is split into fixed-size chunks
(chunk boundaries do not depend on the pool size) and partial results are
combined in ascending chunk order, so any PWHUBERT_WORKERS value produces
bit-identical output.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

CHUNK_ROWS = 8192

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Pool size from PWHUBERT_WORKERS (default 1, clamped to >= 1)."""
    raw = os.environ.get("PWHUBERT_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PWHUBERT_WORKERS must be an integer, got {raw!r}") from None
    return max(1, n)


def chunk_spans(n: int, chunk: int = CHUNK_ROWS) -> list[tuple[int, int]]:
    """[0, n) as half-open spans of at most `chunk` items."""
    return [(a, min(a + chunk, n)) for a in range(0, n, chunk)]


def map_ordered(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map `fn` over `items`, results in input order, pool size from the env."""
    n_workers = worker_count()
    if n_workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))
