import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from truncsa.schedules import (
    CompactFamily,
    CustomGain,
    GainSchedule,
    check_h2,
    compact_index_containing,
    contains,
    gain,
    gain_array,
)


def _point(r, d=1):
    x = np.zeros(d)
    x[0] = r
    return x


@pytest.mark.parametrize(
    "a, b, alpha, n, expected",
    [(1, 0, 1, 5, 0.2), (1, 0, 1, 1, 1.0), (2, 10, 0.75, 6, 0.25)],
)
def test_gain_examples(a, b, alpha, n, expected):
    assert gain(GainSchedule(a, b, alpha), n) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("alpha", [0.5, 0.4, 1.1, 0.0, -1.0])
def test_constructor_rejects_alpha_outside_range(alpha):
    with pytest.raises(ValueError, match=r"gain.alpha must be in \(0.5, 1\]"):
        GainSchedule(1.0, 0.0, alpha)


def test_constructor_rejects_bad_scale_and_offset():
    with pytest.raises(ValueError):
        GainSchedule(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        GainSchedule(1.0, -1.0, 1.0)


def test_gain_index_starts_at_one():
    with pytest.raises(ValueError):
        GainSchedule().gain(0)


@given(
    a=st.floats(0.01, 100),
    b=st.floats(0, 100),
    alpha=st.floats(0.5, 1.0, exclude_min=True),
    n=st.integers(1, 10**7),
)
def test_gain_positive_and_nonincreasing(a, b, alpha, n):
    s = GainSchedule(a, b, alpha)
    assert s.gain(n) > 0
    assert s.gain(n + 1) <= s.gain(n)


@pytest.mark.parametrize(
    "alpha, expected",
    [(1.0, (True, True)), (0.6, (True, True)), (0.4, (True, False))],
)
def test_check_h2_examples(alpha, expected):
    s = GainSchedule.unchecked(1.0, 0.0, alpha)
    r = check_h2(s)
    assert (r.divergent_sum, r.square_summable) == expected


def test_custom_gain_escape_hatch():
    s = CustomGain([1.0, 0.5, 0.5])
    assert s.gain(1) == 1.0 and s.gain(3) == 0.5
    with pytest.raises(IndexError):
        s.gain(4)
    assert not check_h2(s).holds  # exempt from the power-law classification
    with pytest.raises(ValueError):
        CustomGain([1.0, 0.0])


def test_partial_sum_lower_bound_alpha_one():
    a = 1.7
    g = gain_array(GainSchedule(a, 0.0, 1.0), 10**6)
    partial = np.cumsum(g)
    N = np.arange(1, 10**6 + 1)
    assert np.all(partial >= a * np.log(N + 1))


def test_square_sum_tail_bound():
    s = GainSchedule(1.0, 0.0, 1.0)
    N = 10**5
    tail = math.fsum(gain_array(s, 10**7, start=N + 1) ** 2)
    assert tail < 10 * s.gain(N) ** 2 * N
    assert tail <= s.tail_square_sum_bound(N)


def test_gain_array_matches_scalar_gain():
    s = GainSchedule(2.0, 10.0, 0.75)
    arr = gain_array(s, 50)
    assert np.allclose(arr, [s.gain(n) for n in range(1, 51)], rtol=1e-15, atol=0)


GEOM = CompactFamily((0.0,), 1.0, "geometric", 2.0)


@pytest.mark.parametrize("r, expected", [(0.5, 0), (3.0, 2), (1.0, 0)])
def test_compact_index_examples(r, expected):
    assert compact_index_containing(GEOM, _point(r)) == expected


def test_contains_examples():
    assert contains(GEOM, 0, _point(1.0))
    assert not contains(GEOM, 1, _point(2.5))
    arith = CompactFamily((0.0,), 1.0, "arithmetic", 0.5)
    assert arith.radius(4) == 3.0
    assert contains(arith, 4, _point(2.9))


def test_compact_family_validation():
    with pytest.raises(ValueError):
        CompactFamily((0.0,), 0.0)
    with pytest.raises(ValueError):
        CompactFamily((0.0,), 1.0, "geometric", 1.0)
    with pytest.raises(ValueError):
        CompactFamily((0.0,), 1.0, "arithmetic", 0.0)
    with pytest.raises(ValueError):
        CompactFamily((0.0,), 1.0, "spiral", 2.0)


families = st.builds(
    lambda c, r0, geo, rate: CompactFamily(tuple(c), r0, "geometric" if geo else "arithmetic", rate),
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    st.floats(0.1, 10),
    st.booleans(),
    st.floats(1.01, 5),
)
points = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2).map(np.array)


@given(families, points, st.integers(0, 20))
def test_nesting(fam, x, j):
    if fam.contains(j, x):
        assert fam.contains(j + 1, x)
    assert fam.radius(j) < fam.radius(j + 1)
    # a point strictly between consecutive radii is in K_{j+1} only
    mid = np.asarray(fam.center) + np.array([0.5 * (fam.radius(j) + fam.radius(j + 1)), 0.0])
    assert fam.contains(j + 1, mid) and not fam.contains(j, mid)


@given(families, points)
def test_index_containing_is_smallest(fam, x):
    j = fam.index_containing(x)
    assert fam.contains(j, x)
    if j >= 1:
        assert not fam.contains(j - 1, x)
