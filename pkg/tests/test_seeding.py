import time

import numpy as np
import pytest

from replica_mi.seeding import derive, map_ordered, mean_and_se, rng


def test_streams_are_reproducible_and_distinct():
    a = rng(3, "x", 1).standard_normal(5)
    assert np.array_equal(a, rng(3, "x", 1).standard_normal(5))
    assert not np.array_equal(a, rng(3, "x", 2).standard_normal(5))
    assert not np.array_equal(a, rng(3, "y", 1).standard_normal(5))
    assert not np.array_equal(a, rng(4, "x", 1).standard_normal(5))


def test_derive_nests():
    assert np.array_equal(
        rng(derive(7, "outer"), "inner").integers(0, 2**32, 4),
        rng(7, "outer", "inner").integers(0, 2**32, 4),
    )


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        derive(-1)


def test_map_ordered_preserves_order_under_threads():
    def slow(k):
        time.sleep(0.002 * (5 - k % 5))
        return k * k

    assert map_ordered(slow, 20, threads=8) == [k * k for k in range(20)]
    assert map_ordered(slow, 0, threads=4) == []


def test_mean_and_se():
    m, se = mean_and_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert mean_and_se([5.0]) == (5.0, 0.0)
    with pytest.raises(ValueError):
        mean_and_se([])
