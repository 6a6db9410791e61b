"""Trial fan-out over a thread pool.

Kernels release the GIL and every trial draws from streams keyed by its own
index, so the chunking (and hence the worker count) never changes results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

CHUNK = 2048


def fan_out(total: int, fn: Callable[[int, int], None], workers: int = 1, chunk: int = CHUNK) -> None:
    """Call ``fn(first, count)`` over consecutive chunks covering ``range(total)``."""
    spans = [(s, min(chunk, total - s)) for s in range(0, total, chunk)]
    if workers <= 1 or len(spans) <= 1:
        for first, count in spans:
            fn(first, count)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(fn, first, count) for first, count in spans]:
            fut.result()
