"""Named, counter-derived random streams.

Every random draw in a simulation comes from ``stream(seed, name, *counters)``,
so a trial's randomness depends only on the root seed and the trial index and
never on which worker ran it or in what order.
"""

from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "channel": 1,
    "noise": 2,
    "pilot_signs": 3,
    "crossgain": 4,
    "beta": 5,
    "data": 6,
}


def stream(seed: int, name: str, *counters: int) -> np.random.Generator:
    """Independent Philox generator for ``(seed, name, *counters)``."""
    try:
        sid = STREAM_IDS[name]
    except KeyError:
        raise ValueError(f"unknown stream {name!r}; known: {sorted(STREAM_IDS)}") from None
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(sid, *map(int, counters)))
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with total variance ``variance``."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
