import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurrence_ldp.dynamics import MarkovMapSpec, build_map
from recurrence_ldp.errors import BadInput
from recurrence_ldp.thermo import (
    Potential,
    brute_force_gibbs_constant,
    chain_variance,
    curvature,
    dimension,
    gibbs_measure,
    local_dimension_range,
    lyapunov,
    moran_T,
    pressure,
    spectrum_T,
    spectrum_table,
    variance,
)

GOLDEN = (1 + math.sqrt(5)) / 2
T2_I2 = math.log2(10 / 16)


def test_pressure_examples(i1, golden_map):
    mp = i1.map
    assert pressure(mp, np.log([0.5, 0.5])) == pytest.approx(0, abs=1e-14)
    assert pressure(mp, [0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-14)
    assert pressure(golden_map, [0.0, 0.0]) == pytest.approx(0.4812118, abs=1e-7)


def test_gibbs_examples(i1, i2, golden):
    assert i2.pressure == pytest.approx(0, abs=1e-14)
    assert i2.kappa == pytest.approx(1, abs=1e-12)
    assert np.allclose(i2.probabilities, [0.25, 0.75])
    g = gibbs_measure(i1.map, Potential([0.0, 0.0]))
    assert g.pressure == pytest.approx(math.log(2))
    assert np.allclose(g.probabilities, [0.5, 0.5])
    parry = np.array([GOLDEN**2, 1]) / (1 + GOLDEN**2)
    assert np.allclose(golden.stationary, parry, atol=1e-12)


def test_gibbs_constant_matches_brute_force(golden):
    assert golden.kappa == pytest.approx(brute_force_gibbs_constant(golden), rel=1e-9)


def test_spectrum_examples(i2):
    assert spectrum_T(i2, 1.0) == pytest.approx(0, abs=1e-10)
    assert spectrum_T(i2, 0.0) == pytest.approx(1, abs=1e-8)
    assert spectrum_T(i2, 2.0) == pytest.approx(T2_I2, abs=1e-7)


def test_moran_examples():
    q = np.linspace(-4, 4, 9)
    assert np.allclose(moran_T([0.5, 0.5], [0.5, 0.5], q), 1 - q, atol=1e-12)
    assert moran_T([0.25, 0.75], [0.5, 0.5], 2.0) == pytest.approx(T2_I2, abs=1e-10)
    assert moran_T([0.25, 0.75], [0.5, 0.5], 0.0) == pytest.approx(1, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.05, 0.95),
    st.fractions(min_value="1/10", max_value="9/10", max_denominator=50),
    st.floats(-6, 6),
)
def test_spectrum_matches_moran_everywhere(p, cut, q):
    mp = build_map(MarkovMapSpec.full_branches([0, cut, 1]))
    g = gibbs_measure(mp, Potential.from_weights([p, 1 - p]))
    ratios = [float(cut), float(1 - cut)]
    assert spectrum_T(g, q) == pytest.approx(float(moran_T([p, 1 - p], ratios, q)), abs=1e-8)


def test_dimension_and_lyapunov(i1, i2, i3):
    assert dimension(i1) == pytest.approx(1, abs=1e-12)
    h = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))
    assert dimension(i2) == pytest.approx(h / math.log(2), abs=1e-9)
    assert lyapunov(i2) == pytest.approx(math.log(2), abs=1e-14)
    lam3 = 0.5 * math.log(10 / 3) + 0.5 * math.log(10 / 7)
    assert dimension(i3) == pytest.approx(math.log(2) / lam3, abs=1e-9)


def test_variance_two_routes(i2, golden):
    assert variance(i2) == pytest.approx(3 / 16 * math.log(3) ** 2, abs=1e-8)
    # Markov case: the fundamental-matrix formula against the pressure route
    obs = golden.log_psi + dimension(golden) * golden.map.log_slopes
    assert chain_variance(golden, obs) == pytest.approx(variance(golden), rel=1e-5)


def test_curvature(i1, i2, i3):
    c = curvature(i2)
    assert c.discrepancy < 1e-6
    assert c.value == pytest.approx(1.53145869, rel=1e-6)
    assert curvature(i3).discrepancy < 1e-6
    assert math.isinf(curvature(i1).value)


def test_local_dimension_range(i2):
    lo, hi = local_dimension_range(i2)
    assert lo == pytest.approx(-2)
    assert hi == pytest.approx(-math.log2(4 / 3))


def test_spectrum_table(i1, i2):
    t = spectrum_table(i2, -5, 5, 0.25)
    assert len(t.q_grid) == 41 and not t.maximal_dimension_flag
    assert np.all(np.diff(t.T_values, 2) >= -1e-8)
    assert spectrum_table(i1).maximal_dimension_flag
    with pytest.raises(BadInput):
        spectrum_table(i2, 1, 0, 0.1)
