import math
from fractions import Fraction as F

import numpy as np
import pytest

from recurrence_ldp.dynamics import SymbolicPoint, encode, extend_point
from recurrence_ldp.errors import BadInput
from recurrence_ldp.mc_lab import (
    Censored,
    TailEstimate,
    conditional_return_cdf,
    empirical_tail,
    exp_law_check,
    fit_rate,
    hitting_time_set,
    kac_check,
    return_time,
    stream,
    wilson,
)
from recurrence_ldp.measure import ball_measure


def test_return_time_examples(i1):
    mp = i1.map
    assert return_time(mp, 0, "1/100", 10) == 1
    assert return_time(mp, F(1, 3), "1/10", 10) == 2
    assert return_time(mp, F(3, 10), "1/20", 1000) == Censored(1000)


def test_return_time_symbolic(i1):
    mp = i1.map
    rng = stream(0, "deepen")
    deepen = lambda p, k: extend_point(i1, p, rng, k)  # noqa: E731
    assert return_time(mp, encode(mp, F(1, 3), 8), "1/10", 10, deepen) == 2


def test_hitting_time_examples(i1):
    mp = i1.map
    assert hitting_time_set(mp, F(1, 3), ("3/5", "7/10"), 10) == 1
    # symbolic membership in [0, 1/2): first later symbol equal to 0
    p = SymbolicPoint((1, 1, 0, 1, 0, 0, 1, 1))
    assert hitting_time_set(mp, p, (0, F(1, 2) - F(1, 2**40)), 5) == 2


def test_wilson_interval():
    lo, hi = wilson(0, 100)
    assert lo == 0 and 0 < hi < 0.05
    lo, hi = wilson(50, 100)
    assert lo < 0.5 < hi


def test_fit_rate_recovers_slope():
    ests = []
    for k in range(6, 12):
        r = 2.0**-k
        n = 100_000
        hits = int(round(n * r**0.4))
        lo, hi = wilson(hits, n)
        ests.append(TailEstimate(r, 0.0, hits, n, hits / n, lo, hi, 0, False, 0, "ge"))
    fit = fit_rate(ests)
    assert fit.slope == pytest.approx(0.4, abs=2e-3) and not fit.surrogate


def test_fit_rate_surrogate_on_zero_hits():
    ests = []
    for k in (8, 9, 10):
        lo, hi = wilson(0, 1000)
        ests.append(TailEstimate(2.0**-k, 0.0, 0, 1000, 0.0, lo, hi, 0, False, 0, "ge"))
    fit = fit_rate(ests)
    assert fit.surrogate
    assert fit.slope == pytest.approx(math.log(hi) / math.log(2.0**-10))


@pytest.mark.parametrize("word", [(0,), (1, 1, 1)])
def test_kac_i2(i2, word):
    val, se = kac_check(i2, word, 100_000, seed=11)
    assert abs(val - 1) <= 3 * se


def test_kac_i1(i1):
    val, se = kac_check(i1, (0,), 100_000, seed=12)
    assert abs(val - 1) <= 3 * se


def test_kac_mean_return_time(i2):
    val, se = kac_check(i2, (0, 0), 50_000, seed=13)
    # mean of tau_A is val / mu(A) = 16 val
    assert abs(16 * val - 16) <= 3 * 16 * se


def test_tail_rates_nonnegative_on_lebesgue(i1):
    _, fit = empirical_tail(i1, 0.1, [2.0**-k for k in (6, 7, 8)], 2000, seed=3)
    assert fit.slope >= 0


def _brute_survival(p0, center, radius, t_grid, n, seed, digits=160):
    """Doubling map with Bernoulli(p0, 1 - p0) digits, by integer shifts.

    Samples x from the measure conditioned on the ball by rejection and
    follows the orbit as binary digit shifts, independently of the package.
    """
    rng = np.random.default_rng(seed)
    one = 1 << digits
    c = int(center * one)
    rad = int(radius * one)
    taus = []
    while len(taus) < n:
        bits = rng.random((4096, digits)) >= p0
        for row in bits:
            x = int("".join("1" if b else "0" for b in row), 2)
            if abs(x - c) >= rad:
                continue
            y, tau = x, None
            for k in range(1, digits - 64):
                y = (y << 1) & (one - 1)
                if abs(y - c) < rad:
                    tau = k
                    break
            taus.append(tau if tau is not None else math.inf)
            if len(taus) == n:
                break
    taus = np.array(taus, dtype=float)
    return taus


def test_survival_matches_brute_force_doubling(i2):
    r = F(1, 2**6)
    center = F(5, 13)
    t_grid = np.array([0.25, 0.5, 1.0, 1.5])
    n = 4000
    curve = conditional_return_cdf(i2, center, r, t_grid, n, seed=21)
    mu_b = ball_measure(i2, center, 2 * r).value
    assert curve.mu_ball == pytest.approx(mu_b, rel=1e-9)
    taus = _brute_survival(0.25, float(center), float(2 * r), t_grid, n, seed=22)
    brute = np.array([np.mean(taus > t / mu_b) for t in t_grid])
    se = np.sqrt(2 * brute * (1 - brute) / n) + 1e-3
    assert np.all(np.abs(curve.survival - brute) <= 4 * se)


def test_exponential_law_typical_center(i2):
    curve = conditional_return_cdf(i2, F(5, 13), 2.0**-10, [1.0], 10_000, seed=5)
    assert curve.survival[0] == pytest.approx(math.exp(-1), abs=0.05)


def test_fixed_point_center_is_bad(i1):
    # about half of the ball around 0 returns after one step
    curve = conditional_return_cdf(i1, 0, 2.0**-8, [0.1, 1.0], 4000, seed=6)
    assert curve.survival[0] < math.exp(-0.1) - 0.3
    frac_bad, worst, verdict, devs = exp_law_check(i1, 2.0**-8, 5, 500, [0.5, 1.0], 0.4, 1.0,
                                                   seed=6)
    assert 0 <= frac_bad <= 1 and worst >= devs.min()
    with pytest.raises(BadInput):
        exp_law_check(i1, 2.0**-8, 2, 100, [0.0, 1.0], 0.4, 1.0)


def test_determinism_across_workers(i2):
    radii = [2.0**-k for k in (7, 8, 9)]
    a = empirical_tail(i2, -0.2, radii, 1500, seed=9, workers=1)[0]
    b = empirical_tail(i2, -0.2, radii, 1500, seed=9, workers=4)[0]
    assert a == b
