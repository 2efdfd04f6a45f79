"""Acceptance checks for the reference instances.

Each ``criterion_k`` returns a :class:`CriterionResult`; ``run_criteria``
runs a selection. The reference instances are

I1  doubling map, Lebesgue measure (maximal dimension)
I2  doubling map, Bernoulli(1/4, 3/4)
I3  full branches on [0, 3/10) and [3/10, 1), Bernoulli(1/2, 1/2)
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import MarkovMapSpec, build_map
from .mc_lab import (
    empirical_tail,
    exp_law_check,
    fast_return_constants,
    kac_check,
    level_set_tail,
    phi_rate_estimate,
)
from .rates import (
    NonPositiveBound,
    g1,
    g2,
    lambda_star,
    phi_from_theory,
    psi_rate,
    quadratic_floor,
    rate_profile,
    step_phi,
    theorem25_lower_bounds,
)
from .thermo import Potential, curvature, gibbs_measure, lyapunov, moran_T, spectrum_T, variance

EPSILONS = (0.05, 0.1, 0.2, 0.3)
TAIL_RADII = [2.0**-k for k in range(8, 15)]
SEED = 42


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  criterion {self.number:2d} {self.title}: {self.detail} [{self.seconds:.1f}s]"


def instance(name: str):
    """Gibbs measure of a reference instance."""
    if name == "I1":
        mp, w = build_map(MarkovMapSpec.full_branches([0, "1/2", 1])), (0.5, 0.5)
    elif name == "I2":
        mp, w = build_map(MarkovMapSpec.full_branches([0, "1/2", 1])), (0.25, 0.75)
    elif name == "I3":
        mp, w = build_map(MarkovMapSpec.full_branches([0, "3/10", 1])), (0.5, 0.5)
    else:
        raise KeyError(name)
    return gibbs_measure(mp, Potential.from_weights(w))


def _ratios(gibbs):
    return [float(1 / b.slope) for b in gibbs.map.branches]


def _timed(number, title):
    def wrap(fn):
        def run(*args, **kw):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kw)
            return CriterionResult(number, title, bool(passed), detail, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


@_timed(1, "spectrum matches the Moran oracle")
def criterion_1():
    q = np.linspace(-5, 5, 41)
    worst = 0.0
    t0 = time.perf_counter()
    for name in ("I2", "I3"):
        g = instance(name)
        T = np.array([spectrum_T(g, float(v)) for v in q])
        worst = max(worst, float(np.max(np.abs(T - moran_T(g.probabilities, _ratios(g), q)))))
    dt = time.perf_counter() - t0
    return worst < 1e-8 and dt < 5, f"max |T - T_moran| = {worst:.3g} < 1e-8, {dt:.2f}s < 5s"


@_timed(2, "spectrum identities")
def criterion_2():
    q = np.linspace(-5, 5, 41)
    ok, parts = True, []
    for name in ("I1", "I2", "I3"):
        g = instance(name)
        t1, t0 = spectrum_T(g, 1.0), spectrum_T(g, 0.0)
        T = np.array([spectrum_T(g, float(v)) for v in q])
        inc = float(np.diff(T).max())
        conv = float(np.diff(T, 2).min())
        good = abs(t1) <= 1e-10 and abs(t0 - 1) <= 1e-8 and inc <= 1e-8 and conv >= -1e-8
        ok &= good
        parts.append(f"{name}: |T(1)|={abs(t1):.2g} |T(0)-1|={abs(t0 - 1):.2g} "
                     f"max dT={inc:.3g} min d2T={conv:.3g}")
    return ok, "; ".join(parts)


@_timed(3, "rate function normalization")
def criterion_3():
    t0 = time.perf_counter()
    ok, parts = True, []
    for name in ("I2", "I3"):
        p = rate_profile(instance(name))
        at_min = lambda_star(p, -p.d_mu)
        lo, hi = p.support
        xs = np.linspace(lo - 0.2, hi + 0.2, 61)
        low = min(lambda_star(p, x) for x in xs)
        psis = [psi_rate(p, s * e) for e in EPSILONS for s in (1, -1)]
        good = abs(at_min) <= 1e-6 and low >= -1e-9 and min(psis) > 0
        ok &= good
        parts.append(f"{name}: Lambda*(-d)={at_min:.2g} min Lambda*={low:.2g} min psi={min(psis):.4g}")
    p1 = rate_profile(instance("I1"))
    inf_ok = all(math.isinf(psi_rate(p1, s * e)) for e in EPSILONS for s in (1, -1))
    ok &= inf_ok and abs(lambda_star(p1, -1.0)) <= 1e-6
    dt = time.perf_counter() - t0
    parts.append(f"I1: psi = inf {inf_ok}")
    return ok and dt < 5, "; ".join(parts) + f"; {dt:.2f}s < 5s"


@_timed(4, "curvature routes agree")
def criterion_4():
    ok, parts = True, []
    for name in ("I2", "I3"):
        c = curvature(instance(name))
        ok &= c.discrepancy < 0.01
        parts.append(f"{name}: c_spec={c.from_spectrum:.6g} c_var={c.from_variance:.6g} "
                     f"rel diff {c.discrepancy:.2g} < 0.01")
    g = instance("I2")
    lam, sig2 = lyapunov(g), variance(g)
    # two-point law: sigma^2 = p (1 - p) log(p1 / p0)^2 = (3/16) log(3)^2
    exact = 3 / 16 * math.log(3) ** 2
    ref = (abs(lam - math.log(2)) < 1e-12 and abs(sig2 - exact) < 1e-8
           and abs(sig2 - 0.2262) / 0.2262 < 1e-3)
    ok &= ref
    parts.append(f"I2 lambda={lam:.10g} (log 2) sigma^2={sig2:.10g} "
                 f"(closed form {exact:.10g}, quoted 0.2262)")
    return ok, "; ".join(parts)


@_timed(5, "quadratic floors on I2")
def criterion_5(kappa=0.9, epsilons=(0.02, 0.05), seed=SEED):
    g = instance("I2")
    p = rate_profile(g)
    c = curvature(g).value
    frc = fast_return_constants(g, p, r_grid=[2.0**-k for k in range(6, 12)], n_per_r=2000,
                                seed=seed)
    a0 = frc.a0_empirical if frc.a0_empirical is not None and frc.a0_empirical > 0 else frc.a0
    ok, parts = True, [f"a0={a0:.4g} d2={frc.d2:.4g}"]
    for eps in epsilons:
        v1 = g1(p, eps)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonPositiveBound)
            v2 = g2(p, eps, a0, frc.d2).value
        f1, f2 = quadratic_floor(c, eps, kappa)
        ok &= v1 >= f1 and v2 >= f2
        parts.append(f"eps={eps}: g1={v1:.6g} {'>=' if v1 >= f1 else '<'} {f1:.6g}, "
                     f"g2={v2:.6g} {'>=' if v2 >= f2 else '<'} {f2:.6g}")
    return ok, "; ".join(parts)


@_timed(6, "max-min route reproduces g2")
def criterion_6(epsilons=(0.1, 0.3)):
    g = instance("I2")
    p = rate_profile(g)
    frc = fast_return_constants(g, p)
    a0, d2 = frc.a0, frc.d2
    ok, parts = True, []
    for eps in epsilons:
        direct = g2(p, eps, a0, d2).value
        phi = phi_from_theory(p, eps, a0, d2)
        grid = theorem25_lower_bounds(lambda t: psi_rate(p, t), phi, eps)[1]
        diff = abs(grid - direct)
        ok &= diff <= 1e-6
        parts.append(f"eps={eps}: g2={direct:.9g} grid={grid:.9g} diff {diff:.2g} <= 1e-6")
    return ok, "; ".join(parts)


@_timed(7, "Kac identity on I2")
def criterion_7(n=100_000, seed=SEED, workers=1):
    g = instance("I2")
    t0 = time.perf_counter()
    ok, parts = True, []
    for word in ((0,), (1, 1), (0, 1, 0)):
        val, se = kac_check(g, word, n, seed, workers)
        ok &= abs(val - 1) <= 3 * se
        parts.append(f"{word}: {val:.5f} +- {se:.5f}")
    dt = time.perf_counter() - t0
    return ok and dt < 60, "; ".join(parts) + f"; {dt:.1f}s < 60s"


def _tail(kind, eps=0.3, n=10_000, seed=SEED, workers=1):
    g = instance("I2")
    p = rate_profile(g)
    sign = 1 if kind == "ge" else -1
    ests, fit = empirical_tail(g, sign * eps, TAIL_RADII, n, 10.0, seed, workers, p.d_mu)
    return g, p, fit


@_timed(8, "slow-return exponent on I2")
def criterion_8(eps=0.3, n=10_000, seed=SEED, workers=1):
    t0 = time.perf_counter()
    _, p, fit = _tail("ge", eps, n, seed, workers)
    bound = g1(p, eps) - 0.1
    dt = time.perf_counter() - t0
    return (fit.slope >= bound and dt < 900,
            f"slope {fit.slope:.4g} +- {fit.stderr:.2g} >= g1 - 0.1 = {bound:.4g}, {dt:.0f}s < 900s")


def empirical_phi_table(gibbs, profile, eps, a_values=(0.05, 0.1, 0.2, 0.3), seed=SEED,
                        workers=1, n_centers=40, n_inner=400):
    """Step function a -> measured phi(a, eps), nonincreasing in a."""
    radii = [2.0**-k for k in (8, 9, 10)]
    table = {}
    for j, a in enumerate(a_values):
        fit = phi_rate_estimate(gibbs, a, eps, 1.0, radii, n_centers, n_inner,
                                seed + j, workers, profile.d_mu)
        table[a] = max(fit.slope, 0.0)
    return step_phi(table), table


@_timed(9, "fast-return exponent on I2")
def criterion_9(eps=0.3, n=10_000, seed=SEED, workers=1):
    t0 = time.perf_counter()
    g, p, fit = _tail("le", eps, n, seed, workers)
    phi, table = empirical_phi_table(g, p, eps, seed=seed, workers=workers)
    b4 = theorem25_lower_bounds(lambda t: psi_rate(p, t), phi, eps, a_range=(1e-9, eps))[1]
    dt = time.perf_counter() - t0
    tab = ", ".join(f"{a}:{v:.3g}" for a, v in table.items())
    return (fit.slope >= b4 - 0.1 and dt < 900,
            f"slope {fit.slope:.4g} +- {fit.stderr:.2g} >= bound4 - 0.1 = {b4 - 0.1:.4g} "
            f"(phi table {tab}), {dt:.0f}s < 900s")


@_timed(10, "exponential law on I2")
def criterion_10(r=2.0**-10, n_centers=200, n_inner=10_000, seed=SEED, workers=1):
    t0 = time.perf_counter()
    t_grid = np.round(np.arange(1, 31) * 0.1, 10)
    a = math.log(0.1) / math.log(r)
    frac_bad, worst, _, devs = exp_law_check(instance("I2"), r, n_centers, n_inner, t_grid, a,
                                             1.0, seed, workers)
    good = 1 - frac_bad
    dt = time.perf_counter() - t0
    return (good >= 0.9 and dt < 600,
            f"{good:.1%} of centers with max|S - e^-t| <= 0.1 (need >= 90%), "
            f"median dev {np.median(devs):.3g}, worst {worst:.3g}, {dt:.0f}s < 600s")


def cramer_exponent(gibbs, y: float) -> float:
    """Decay exponent in r of P(mean of Y_i >= y), Y_i = log p_w / log(1/2), for the doubling map.

    With n = log2(1/r) symbols P ~ exp(-n I(y)) = r^(I(y) / log 2), I the
    relative entropy of the tilted two-point law.
    """
    p = gibbs.probabilities
    vals = np.log(p) / math.log(0.5)
    lo, hi = np.argmin(vals), np.argmax(vals)
    f = (y - vals[lo]) / (vals[hi] - vals[lo])
    if not 0 <= f <= 1:
        return math.inf
    rate = 0.0
    for frac, prob in ((f, p[hi]), (1 - f, p[lo])):
        if frac > 0:
            rate += frac * math.log(frac / prob)
    return rate / math.log(2)


@_timed(11, "level-set rate matches Lambda*")
def criterion_11(eps=0.3, n=10_000, seed=SEED, workers=1):
    g = instance("I2")
    p = rate_profile(g)
    radii = [2.0**-k for k in (10, 15, 20, 25, 30, 35, 40)]
    _, fit = level_set_tail(g, eps, radii, n, seed, workers, p.d_mu)
    target = lambda_star(p, -p.d_mu - eps)
    cramer = cramer_exponent(g, p.d_mu + eps)
    rel = abs(fit.slope - target) / target
    agree = abs(cramer - target) / target
    return (rel <= 0.25 and agree <= 1e-6,
            f"slope {fit.slope:.4g} vs Lambda*(-d-{eps}) = {target:.6g} (rel {rel:.1%} <= 25%); "
            f"Cramer rate {cramer:.6g} (rel {agree:.2g})")


@_timed(12, "determinism across worker counts")
def criterion_12(seed=SEED):
    from .cli import find_config, run_scenario
    from .config import load

    cfg = load(find_config("i2_bernoulli_quarter.cfg"))
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for w in (1, 8):
            out = Path(tmp) / f"w{w}"
            run_scenario(cfg, out_dir=out, seed=seed, workers=w)
            outs.append(out)
        names = sorted(p.name for p in outs[0].glob("*.csv"))
        match, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
    ok = not mismatch and not errors and len(match) == len(names) == 5
    return ok, f"{len(match)}/{len(names)} CSV files byte-identical"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 13)}


def run_criteria(ids=None, **kw):
    for k in ids or sorted(CRITERIA):
        yield CRITERIA[k](**kw) if kw else CRITERIA[k]()
