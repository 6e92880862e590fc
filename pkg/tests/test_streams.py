import threading

import numpy as np
import pytest

from fbmc_uplink.parallel import run_trials
from fbmc_uplink.streams import complex_normal, stream


def test_streams_are_reproducible():
    a = stream(9, "noise", 3, 1).standard_normal(5)
    b = stream(9, "noise", 3, 1).standard_normal(5)
    np.testing.assert_array_equal(a, b)


def test_streams_are_distinct():
    base = stream(9, "noise", 3).standard_normal(4)
    for other in (stream(9, "noise", 4), stream(9, "channel", 3), stream(10, "noise", 3)):
        assert not np.array_equal(base, other.standard_normal(4))


def test_large_seed_accepted():
    stream(2**64 - 1, "channel", 0).random()


def test_unknown_stream():
    with pytest.raises(ValueError):
        stream(0, "nope")
    with pytest.raises(ValueError):
        stream(-1, "noise")


def test_complex_normal_variance():
    z = complex_normal(stream(0, "noise"), 200_000, variance=3.0)
    assert abs(np.mean(np.abs(z) ** 2) - 3.0) < 0.05


def test_run_trials_order_independent_of_threads():
    def fn(t):
        return stream(1, "data", t).standard_normal(3)

    one = run_trials(fn, 37, threads=1)
    many = run_trials(fn, 37, threads=6)
    for a, b in zip(one, many):
        np.testing.assert_array_equal(a, b)


def test_run_trials_uses_workers():
    seen = set()

    def fn(t):
        seen.add(threading.get_ident())
        return t

    assert run_trials(fn, 20, threads=4) == list(range(20))
    with pytest.raises(ValueError):
        run_trials(fn, 3, threads=0)
