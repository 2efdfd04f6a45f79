import math
import warnings

import numpy as np
import pytest

from recurrence_ldp.errors import BadInput, NonPositiveRate
from recurrence_ldp.rates import (
    combine_min_rate,
    g1,
    g1_grid,
    g2,
    lambda_of,
    lambda_star,
    phi_from_theory,
    psi_rate,
    quadratic_floor,
    step_phi,
    t_star,
    t_star_grid,
    theorem25_lower_bounds,
)

T2_I2 = math.log2(10 / 16)
# frozen constants of I2: smallest local dimension and the surrogate a0, d2
A0_I2, D2_I2 = 0.1130323305, 0.1683554220


def test_lambda_examples(p2):
    assert lambda_of(p2, 0.0) == pytest.approx(0, abs=1e-10)
    assert lambda_of(p2, -1.0) == pytest.approx(1, abs=1e-8)
    assert lambda_of(p2, 1.0) == pytest.approx(T2_I2, abs=1e-7)


def test_t_star_examples(p1, p2):
    assert t_star(p2, -p2.d_mu) == pytest.approx(-p2.d_mu, abs=1e-9)
    assert t_star(p1, -1.0) == -1.0
    assert math.isinf(t_star(p1, -0.9))
    assert math.isinf(t_star(p2, 0.0))


@pytest.mark.parametrize("x", [-1.9, -1.1113, -0.5113])
def test_t_star_matches_grid_oracle(p2, x):
    assert t_star(p2, x) == pytest.approx(t_star_grid(p2, x), abs=1e-6)


def test_lambda_star_examples(p1, p2):
    assert lambda_star(p2, -p2.d_mu) == pytest.approx(0, abs=1e-12)
    assert lambda_star(p1, -1.0) == 0
    assert math.isinf(lambda_star(p1, -1.2))
    assert lambda_star(p2, -p2.d_mu - 0.3) == pytest.approx(0.121943004, abs=1e-8)
    # support edges: thickest point 1^k and thinnest point 0^k
    assert lambda_star(p2, -2.0) == pytest.approx(2.0, abs=1e-8)
    assert lambda_star(p2, -math.log2(4 / 3)) == pytest.approx(math.log2(4 / 3), abs=1e-8)


def test_lambda_star_convex_nonnegative(p2, p3):
    for p in (p2, p3):
        lo, hi = p.support
        xs = np.linspace(lo + 1e-3, hi - 1e-3, 60)
        v = np.array([lambda_star(p, x) for x in xs])
        assert v.min() >= -1e-9
        assert np.diff(v, 2).min() >= -1e-7


def test_psi_examples(p1, p2):
    assert psi_rate(p2, 0.0) == 0
    assert psi_rate(p2, 0.3) == pytest.approx(lambda_star(p2, -p2.d_mu - 0.3))
    assert psi_rate(p2, 0.3) > 0 and psi_rate(p2, -0.3) > 0
    assert math.isinf(psi_rate(p1, 0.1)) and math.isinf(psi_rate(p1, -0.1))


def test_g1_examples(p1, p2):
    assert g1(p1, 0.2) == 0.2
    assert g1(p2, 0.0) == 0
    assert g1(p2, 0.3) == pytest.approx(g1_grid(p2, 0.3), abs=1e-4)


def test_g1_matches_bound3(p2):
    b3 = theorem25_lower_bounds(lambda t: psi_rate(p2, t), lambda a: 0.0, 0.3)[0]
    assert b3 == pytest.approx(g1(p2, 0.3), abs=1e-6)


def test_bound3_degenerate_cases():
    assert theorem25_lower_bounds(lambda t: math.inf, lambda a: 0.0, 0.2)[0] == pytest.approx(0.2)
    assert theorem25_lower_bounds(lambda t: 0.0, lambda a: 0.0, 0.2)[0] == 0


def test_g2_examples(p1, p2):
    assert g2(p1, 0.3, 0.05, 0.5).value == pytest.approx(0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            assert g2(p2, 0.0, 0.1, 0.1).value <= 0
        except (NonPositiveRate, BadInput):
            pass
    v = g2(p2, 0.3, A0_I2, D2_I2).value
    assert 0 < v <= g1(p2, 0.3) + 0.3


def test_g2_matches_maxmin_route(p2):
    phi = phi_from_theory(p2, 0.3, A0_I2, D2_I2)
    b4 = theorem25_lower_bounds(lambda t: psi_rate(p2, t), phi, 0.3)[1]
    assert b4 == pytest.approx(g2(p2, 0.3, A0_I2, D2_I2).value, abs=1e-6)


def test_quadratic_floor():
    f1, f2 = quadratic_floor(1.53145869, 0.05, 0.9)
    assert f1 == pytest.approx(0.003446, abs=1e-6)
    assert f2 == pytest.approx(0.000383, abs=1e-6)
    assert quadratic_floor(2.0, 0.0, 0.9) == (0.0, 0.0)
    assert all(math.isinf(v) for v in quadratic_floor(math.inf, 0.1, 0.9))


def test_combine_min_rate():
    assert combine_min_rate([0.5, 0.2]) == 0.2
    assert combine_min_rate([math.inf, 0.7]) == 0.7
    with pytest.raises(NonPositiveRate):
        combine_min_rate([0.3, 0.0])


def test_step_phi_monotone():
    phi = step_phi({0.05: 0.1, 0.1: 0.4, 0.2: 0.05})
    assert phi(0.01) == 0.1 and phi(0.1) == 0.1 and phi(0.2) == 0.05 and phi(0.5) == 0
