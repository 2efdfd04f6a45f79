from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurrence_ldp.dynamics import (
    Branch,
    MarkovMapSpec,
    SymbolicPoint,
    build_map,
    cylinder,
    encode,
    orbit_distance,
    positions,
    sample_point,
)
from recurrence_ldp.errors import (
    BadPartition,
    Inadmissible,
    NotExpanding,
    NotMarkov,
    NotPrimitive,
)
from recurrence_ldp.mc_lab import stream


def test_encode_examples(i1, i3):
    assert encode(i1.map, "3/10", 3).word == (0, 1, 0)
    assert encode(i1.map, 0, 4).word == (0, 0, 0, 0)
    assert encode(i3.map, "9/10", 2).word == (1, 1)


def test_cylinder_examples(i1, i3):
    assert cylinder(i1.map, (0, 1)) == (F(1, 4), F(1, 2))
    assert cylinder(i3.map, (0,)) == (F(0), F(3, 10))
    assert cylinder(i1.map, (1, 0, 1)) == (F(5, 8), F(3, 4))


def test_orbit_distance_examples(i1):
    mp = i1.map
    lo, hi = orbit_distance(mp, encode(mp, F(1, 3), 20), 2)
    assert lo <= 0 <= hi or lo == 0
    assert hi - lo <= 2 * F(1, 2**18)
    lo, hi = orbit_distance(mp, encode(mp, 0, 12), 1)
    assert lo == 0 and hi <= F(1, 2**11)
    lo, hi = orbit_distance(mp, encode(mp, F(3, 10), 30), 1)
    assert lo <= F(3, 10) <= hi and hi - lo < 1e-6


def test_sampling_is_deterministic(i1):
    a = sample_point(i1, stream(5, "t"), 10)
    b = sample_point(i1, stream(5, "t"), 10)
    assert a == b


def test_symbol_frequency_i2(i2):
    rng = stream(1, "freq")
    words = [sample_point(i2, rng, 1).word[0] for _ in range(100_000)]
    freq = np.mean(np.array(words) == 0)
    se = np.sqrt(0.25 * 0.75 / 100_000)
    assert abs(freq - 0.25) <= 3 * se


def test_golden_mean_words_admissible(golden):
    rng = stream(2, "golden")
    for _ in range(300):
        w = sample_point(golden, rng, 40).word
        assert all(not (a == 1 and b == 1) for a, b in zip(w, w[1:]))


def test_validation_errors():
    def spec(*branches, transition=None):
        return MarkovMapSpec(tuple(Branch.make(*b) for b in branches), transition)

    with pytest.raises(NotExpanding):
        build_map(spec((0, "1/2", 1, 0, "1/2"), ("1/2", 1, 2, 0, 1)))
    with pytest.raises(NotMarkov):
        build_map(spec((0, "1/2", 3, 0, "3/2"), ("1/2", 1, 2, 0, 1)))
    with pytest.raises(BadPartition):
        build_map(spec((0, "1/3", 2, 0, "2/3"), ("1/2", 1, 2, 0, 1)))
    with pytest.raises(NotPrimitive):
        # halves swap each step: irreducible with period 2
        build_map(spec((0, "1/4", 2, "1/2", 1), ("1/4", "1/2", 2, "1/2", 1),
                       ("1/2", "3/4", 2, 0, "1/2"), ("3/4", 1, 2, 0, "1/2")))


def test_inadmissible_cylinder(golden):
    with pytest.raises(Inadmissible):
        cylinder(golden.map, (1, 1))


@settings(max_examples=60, deadline=None)
@given(st.fractions(min_value=0, max_value=F(999, 1000)), st.integers(1, 30))
def test_encode_lands_in_cylinder(x, n):
    mp = build_map(MarkovMapSpec.full_branches([0, "3/10", 1]))
    lo, hi = cylinder(mp, encode(mp, x, n).word)
    assert lo <= x < hi


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_positions_within_slack(seed):
    mp = build_map(MarkovMapSpec.full_branches([0, "3/10", 1]))
    rng = np.random.default_rng(seed)
    words = rng.integers(0, 2, size=(3, mp.lookahead + 5))
    pos = positions(mp, words)
    for row, prow in zip(words, pos):
        for k in range(pos.shape[1]):
            lo, hi = cylinder(mp, row[k:])
            assert abs(prow[k] - float(lo)) <= mp.position_slack + float(hi - lo)


def test_symbolic_point_shift():
    p = SymbolicPoint((0, 1, 1, 0))
    assert p.depth == 4 and p.shifted(2).word == (1, 0)
