"""Index-ordered parallel map over a process pool."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional

WORKERS_ENV = "GARCHQR_WORKERS"


def default_workers() -> int:
    """Worker count from ``GARCHQR_WORKERS``; 1 (in-process) when unset."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def map_ordered(fn: Callable, items: Iterable, workers: Optional[int] = None,
                chunksize: int = 1) -> List:
    """``[fn(x) for x in items]``, optionally spread over processes.

    Results come back in input order whatever the completion order, so
    reductions over them are deterministic.
    """
    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
