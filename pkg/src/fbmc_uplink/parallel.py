"""Trial fan-out whose results never depend on the worker count."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")


def run_trials(fn: Callable[[int], T], trials: int, threads: int = 1) -> list[T]:
    """Evaluate ``fn(t)`` for ``t in range(trials)`` and return results in trial order.

    Each trial must draw its randomness from streams keyed by ``t``; the
    reduction is then independent of scheduling.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1 or trials <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))
