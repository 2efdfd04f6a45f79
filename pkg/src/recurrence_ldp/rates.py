"""Legendre transforms of the spectrum and the return-time rate bounds.

Conventions: ``Lambda(l) = T(l + 1)``, ``Lambda*(x) = -x + T*(x)`` and
``psi(e) = Lambda*(-d - e)`` for signed ``e``. Infinite rates are carried as
``math.inf`` through every min/max.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import BadInput, NoConvergence, NonPositiveRate
from .thermo import (
    GibbsMeasure,
    dimension,
    is_maximal_dimension,
    local_dimension_range,
    spectrum_slope,
    spectrum_T,
)

INF = math.inf
EDGE_TOL = 1e-12
Q_LIMIT = 2.0**14


class NonPositiveBound(UserWarning):
    """The computed rate bound is not positive (epsilon too small for a0, d2)."""


@dataclass
class RateProfile:
    gibbs: GibbsMeasure
    d_mu: float
    support: tuple
    maximal: bool
    _cache: dict = field(default_factory=dict, repr=False)

    def lambda_star(self, x: float) -> float:
        return lambda_star(self, x)

    def psi_plus(self, eps: float) -> float:
        return psi_rate(self, eps)

    def psi_minus(self, eps: float) -> float:
        return psi_rate(self, -eps)

    @property
    def span(self) -> float:
        return self.support[1] - self.support[0]


def rate_profile(gibbs: GibbsMeasure) -> RateProfile:
    d = dimension(gibbs)
    maximal = is_maximal_dimension(gibbs)
    support = (-d, -d) if maximal else tuple(float(v) for v in local_dimension_range(gibbs))
    return RateProfile(gibbs, d, support, maximal)


def lambda_of(profile_or_gibbs, lam: float) -> float:
    """Lambda(lam) = T(lam + 1), solved afresh at lam + 1."""
    gibbs = getattr(profile_or_gibbs, "gibbs", profile_or_gibbs)
    return spectrum_T(gibbs, lam + 1.0)


def _edge_value(profile: RateProfile, side: int) -> float:
    """T*(x) at the support edge: limit of q x - T(q) as q -> side * inf."""
    key = ("edge", side)
    if key in profile._cache:
        return profile._cache[key]
    g = profile.gibbs
    x = profile.support[1] if side > 0 else profile.support[0]
    # q x - T(q) increases towards its limit; a drop or a failed solve means
    # the weights have degenerated numerically, and the best value so far is
    # already converged
    best = None
    q = 8.0
    while q <= Q_LIMIT:
        qq = side * q
        try:
            val = qq * x - spectrum_T(g, qq)
        except NoConvergence:
            if best is None:
                raise
            break
        if best is not None:
            if val < best - 1e-9 * max(1.0, abs(qq * x)):
                break
            if abs(val - best) <= 1e-11 * max(1.0, abs(val)):
                best = max(best, val)
                break
        best = val if best is None else max(best, val)
        q *= 2
    val = best
    profile._cache[key] = val
    return val


def _q_of_slope(profile: RateProfile, x: float) -> float:
    """Solve T'(q) = x for x strictly inside the support."""
    g = profile.gibbs

    def f(q):
        return spectrum_slope(g, q) - x

    # T' is nondecreasing; start from q = 1 where T'(1) = -d
    if abs(x + profile.d_mu) <= EDGE_TOL:
        return 1.0
    if x >= -profile.d_mu:
        lo, hi = 1.0, 2.0
        while f(hi) < 0:
            lo, hi = hi, 1 + 2 * (hi - 1)
            if hi > Q_LIMIT:
                return math.nan
    else:
        lo, hi = 0.0, 1.0
        while f(lo) > 0:
            lo, hi = 1 - 2 * (1 - lo), lo
            if lo < -Q_LIMIT:
                return math.nan
    flo, fhi = f(lo), f(hi)
    if flo == 0 or fhi == 0 or (flo > 0) == (fhi > 0):
        # only rounding can make the bracket fail; take the better end
        return lo if abs(flo) <= abs(fhi) else hi
    return brentq(f, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=300)


def t_star(profile: RateProfile, x: float) -> float:
    """T*(x) = sup_q (q x - T(q)), +inf outside the closure of range(T')."""
    x = float(x)
    lo, hi = profile.support
    if profile.maximal:
        return x if abs(x - lo) <= 1e-9 else INF
    if x < lo - EDGE_TOL or x > hi + EDGE_TOL:
        return INF
    if x <= lo + EDGE_TOL:
        return _edge_value(profile, -1)
    if x >= hi - EDGE_TOL:
        return _edge_value(profile, +1)
    q = _q_of_slope(profile, x)
    if math.isnan(q):
        # so close to an edge that the maximiser is beyond the search range
        return _edge_value(profile, 1 if x > -profile.d_mu else -1)
    return q * x - spectrum_T(profile.gibbs, q)


def lambda_star(profile: RateProfile, x: float) -> float:
    """Lambda*(x) = -x + T*(x)."""
    key = ("ls", float(x))
    cache = profile._cache
    if key not in cache:
        ts = t_star(profile, x)
        val = -x + ts
        # rounding at the minimum can leave a value of order -1e-16
        cache[key] = 0.0 if -1e-12 < val < 0 else val
    return cache[key]


def t_star_grid(profile: RateProfile, x: float, q_max: float = 40.0, step: float = 0.05) -> float:
    """Independent route to T*(x): dense q-grid supremum, then a bounded polish.

    Uses only values of T, no derivatives.
    """
    g = profile.gibbs
    qs = np.arange(-q_max, q_max + step / 2, step)
    vals = np.array([q * x - spectrum_T(g, q) for q in qs])
    k = int(np.argmax(vals))
    if k in (0, len(qs) - 1):
        return float(vals[k])
    res = minimize_scalar(
        lambda q: -(q * x - spectrum_T(g, q)),
        bounds=(qs[k - 1], qs[k + 1]),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(max(vals[k], -res.fun))


def psi_rate(profile: RateProfile, eps: float) -> float:
    """psi(eps) = Lambda*(-d - eps) for signed eps; psi(0) = 0."""
    if eps == 0:
        return 0.0
    return lambda_star(profile, -profile.d_mu - eps)


def g1(profile: RateProfile, eps: float) -> float:
    """sup over gamma in (0,1) of min{(1 - gamma) eps, Lambda*(-d - gamma eps)}."""
    if eps < 0:
        raise BadInput("epsilon must be nonnegative")
    if eps == 0:
        return 0.0
    if profile.maximal:
        return float(eps)

    def diff(gamma):
        return (1 - gamma) * eps - psi_rate(profile, gamma * eps)

    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if diff(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return (1 - hi) * eps


def g1_grid(profile: RateProfile, eps: float, step: float = 1e-4) -> float:
    """Brute-force g1 over a uniform gamma grid (oracle for :func:`g1`)."""
    gammas = np.arange(step, 1.0, step)
    best = 0.0
    for gamma in gammas:
        best = max(best, min((1 - gamma) * eps, psi_rate(profile, gamma * eps)))
    return best


def _level_inverse(profile: RateProfile, level: float, side: int) -> float:
    """Smallest delta > 0 with Lambda*(-d + side * delta) >= level.

    side = -1 is the left branch (psi(+delta)), side = +1 the right branch.
    Returns the distance to the support edge when the level is above the
    edge value (Lambda* is +inf beyond it).
    """
    d = profile.d_mu
    key = ("inv", side, level)
    if key in profile._cache:
        return profile._cache[key]
    if level <= 0:
        return 0.0
    if profile.maximal:
        return 0.0
    edge_x = profile.support[1] if side > 0 else profile.support[0]
    edge_delta = abs(edge_x + d)
    if lambda_star(profile, edge_x) <= level:
        out = edge_delta
    else:
        g = profile.gibbs

        # along q the rate on this branch is (q - 1) T'(q) - T(q), monotone in |q - 1|
        def rate_at(q):
            return (q - 1) * spectrum_slope(g, q) - spectrum_T(g, q)

        step = 1.0
        while rate_at(1 + side * step) < level:
            step *= 2
            if step > Q_LIMIT:
                out = edge_delta
                break
        else:
            qa, qb = sorted((1 + side * step / 2 if step > 1 else 1.0, 1 + side * step))
            q = brentq(lambda q: rate_at(q) - level, qa, qb, xtol=1e-14, maxiter=300)
            out = abs(spectrum_slope(g, q) + d)
    profile._cache[key] = out
    return out


@dataclass(frozen=True)
class G2Result:
    value: float
    gamma: float
    eps1: float
    eps2: float


def g2(profile: RateProfile, eps: float, a0: float, d2: float) -> G2Result:
    """Fast-return bound, max over (gamma, eps', eps'') of the four-term min.

    Every term other than ``-gamma eps - eps'' + min{d2, eps - eps'}`` is
    nondecreasing in one parameter, so the optimum is the largest level L
    reachable with the smallest parameters achieving it: ``gamma eps``,
    ``eps'`` and ``eps''`` are the level-L inverses of Lambda* on the left and
    right branches. Bisection on L then finds the crossing.
    """
    if a0 <= 0 or d2 <= 0:
        raise BadInput("a0 and d2 must be positive")
    if eps <= 0:
        _warn_nonpositive(0.0, eps)
        return G2Result(0.0, 0.0, 0.0, 0.0)

    if profile.maximal:
        val = min(d2, eps, a0)
        if val <= 0:
            _warn_nonpositive(val, eps)
        return G2Result(val, 0.0, 0.0, 0.0)

    def slack(level):
        dm = _level_inverse(profile, level, -1)
        dp = _level_inverse(profile, level, +1)
        if dm >= eps:
            return -INF, dm, dp
        return -dm - dp + min(d2, eps - dp) - level, dm, dp

    lo, hi = 0.0, min(a0, eps)
    if slack(hi)[0] >= 0:
        lo = hi
    else:
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if slack(mid)[0] >= 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
    _, dm, dp = slack(lo)
    if lo <= 0:
        _warn_nonpositive(lo, eps)
    return G2Result(lo, dm / eps, dp, dp)


def _warn_nonpositive(value, eps):
    warnings.warn(
        f"g2 bound {value:.3g} is not positive at eps={eps}", NonPositiveBound, stacklevel=3
    )


def _maxmin_refine(
    axes_values: Sequence[Callable], bounds, objective, points=32, passes=20, window=4
):
    """Maximise ``objective`` over a product grid, zooming around the incumbent.

    ``axes_values[k](grid)`` tabulates the per-axis terms so each pass costs
    ``points`` evaluations per axis, and ``objective`` combines the tables by
    broadcasting.
    """
    bounds = [list(b) for b in bounds]
    best_val, best_arg = -INF, None
    for _ in range(passes):
        grids = [np.linspace(lo, hi, points) for lo, hi in bounds]
        tables = [fn(grid) for fn, grid in zip(axes_values, grids)]
        vals = objective(grids, tables)
        idx = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[idx] >= best_val:
            best_val = float(vals[idx])
            best_arg = tuple(float(grid[i]) for grid, i in zip(grids, idx))
        for k, grid in enumerate(grids):
            h = grid[1] - grid[0]
            lo0, hi0 = bounds[k]
            c = best_arg[k]
            bounds[k] = [max(lo0, c - window * h), min(hi0, c + window * h)]
    return best_val, best_arg


def theorem25_lower_bounds(
    psi: Callable[[float], float],
    phi: Callable[[float], float],
    eps: float,
    a_range=None,
    points: int = 32,
    passes: int = 20,
):
    """The two max-min bounds on the slow and fast return exponents.

    bound3 = max_gamma min{(1 - gamma) eps, psi(gamma eps)}
    bound4 = max_{gamma, a, eps''} min{-gamma eps - eps'' + a, psi(gamma eps),
                                      phi(a), psi(-eps'')}

    ``psi`` takes a signed deviation; ``phi`` is the fast-return rate as a
    function of ``a`` at this ``eps``. Parameters live on grids refined
    around the incumbent. Returns ``(bound3, bound4, argmax4)``.
    """
    if eps <= 0:
        return 0.0, 0.0, (0.0, 0.0, 0.0)
    tiny = 1e-12
    vpsi = np.vectorize(lambda t: float(psi(t)), otypes=[float])
    vphi = np.vectorize(lambda t: float(phi(t)), otypes=[float])

    def obj3(grids, tables):
        (gam,), (tab,) = grids, tables
        return np.minimum((1 - gam) * eps, tab)

    b3, _ = _maxmin_refine(
        [lambda gam: vpsi(gam * eps)], [(tiny, 1 - tiny)], obj3, points, passes
    )
    b3 = max(b3, 0.0)

    a_lo, a_hi = a_range if a_range is not None else (tiny, eps)

    def obj4(grids, tables):
        gam, a, e2 = np.meshgrid(*grids, indexing="ij", sparse=True)
        t_g, t_a, t_e = np.meshgrid(*tables, indexing="ij", sparse=True)
        first = -gam * eps - e2 + a
        return np.minimum(np.minimum(first, t_g), np.minimum(t_a, t_e))

    b4, arg = _maxmin_refine(
        [lambda gam: vpsi(gam * eps), vphi, lambda e2: vpsi(-e2)],
        [(tiny, 1 - tiny), (a_lo, a_hi), (tiny, eps)],
        obj4,
        points,
        passes,
    )
    return b3, b4, arg


def phi_from_theory(profile: RateProfile, eps: float, a0: float, d2: float):
    """phi(a) = min{a0, psi(-eps')} with a = min{d2, eps - eps'} (best eps' for a)."""

    def phi(a):
        if a <= 0 or a > min(d2, eps):
            return -INF
        return min(a0, psi_rate(profile, -(eps - a)))

    return phi


def quadratic_floor(c: float, eps: float, kappa: float):
    """(kappa c eps^2, kappa c (eps/3)^2); infinite c passes through."""
    if not 0 < kappa < 1:
        raise BadInput("kappa must lie in (0, 1)")
    if eps == 0:
        return 0.0, 0.0
    if math.isinf(c):
        return INF, INF
    return kappa * c * eps**2, kappa * c * (eps / 3) ** 2


def combine_min_rate(rates) -> float:
    """Lower rate of a finite sum of terms: the smallest individual rate."""
    rates = [float(r) for r in rates]
    if not rates:
        raise BadInput("no rates to combine")
    for r in rates:
        if not r > 0:
            raise NonPositiveRate(f"rate {r} is not positive")
    return min(rates)


def lambda_curve(profile: RateProfile, x_grid) -> np.ndarray:
    return np.array([lambda_star(profile, x) for x in x_grid])


def step_phi(table: dict):
    """Step function a -> phi(a) from measured points.

    phi is nonincreasing in a (a larger a lowers the threshold C r^a), so
    each step takes the running minimum over smaller a; beyond the last
    point phi is 0.
    """
    keys = sorted(table)
    vals = np.minimum.accumulate([max(float(table[k]), 0.0) for k in keys])

    def phi(a):
        i = bisect.bisect_left(keys, a)
        return float(vals[i]) if i < len(keys) else 0.0

    return phi
