"""Monte Carlo estimates of return-time statistics.

Samples are itineraries drawn from the Markov chain of a Gibbs measure.
Orbit positions ``g^n x`` come from the contracting backward recurrence
(see :func:`dynamics.positions`), which is accurate to ``position_slack``;
a comparison that falls inside that slack is settled exactly from the
cylinders of the word, or reported as undecided.

Randomness: samples are grouped in fixed-size blocks and block ``b`` of
operation ``tag`` draws from ``Philox(SeedSequence(seed, spawn_key=(crc32(tag), *index, b)))``.
Blocks never share a generator, so results do not depend on how blocks are
spread over worker threads.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import binomtest

from .dynamics import (
    MarkovMap,
    SymbolicPoint,
    cylinder,
    encode,
    positions,
    to_fraction,
)
from .errors import BadInput, InsufficientDepth, InvalidEstimate
from .measure import ball_interval, ball_measure, classify_level_set, interval_pieces
from .rates import RateProfile, psi_rate
from .thermo import GibbsMeasure, dimension, local_dimension_range

BLOCK = 500
EXTRA = 64          # symbols kept beyond the lookahead for exact checks
BUDGET = 2_000_000  # max (rows x columns) held per block while scanning
Z95 = 1.959963984540054


@dataclass(frozen=True)
class Censored:
    cap: int


@dataclass(frozen=True)
class TailEstimate:
    r: float
    threshold_exponent: float
    hits: int
    n: int
    p_hat: float
    ci_low: float
    ci_high: float
    censored: int
    invalid: bool = False
    undecided: int = 0
    kind: str = "ge"


@dataclass
class RateFit:
    points: list
    slope: float
    stderr: float
    r_grid: list
    intercept: float = 0.0
    surrogate: bool = False
    estimates: list = field(default_factory=list)


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    key = (zlib.crc32(tag.encode()),) + tuple(int(i) for i in index)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def wilson(hits: int, n: int) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(int(hits), int(n)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _run_blocks(fn, n_items: int, workers: int = 1, block: int = BLOCK):
    """Apply ``fn(block_index, start, stop)`` to consecutive blocks, results in block order."""
    spans = [(b, s, min(s + block, n_items)) for b, s in enumerate(range(0, n_items, block))]
    if workers <= 1 or len(spans) <= 1:
        return [fn(*sp) for sp in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda sp: fn(*sp), spans))


# symbol generation ------------------------------------------------------


class _Chain:
    def __init__(self, gibbs: GibbsMeasure):
        self.gibbs = gibbs
        self.m = gibbs.map.m
        self.iid = gibbs.is_bernoulli
        self.dtype = np.int8 if self.m < 128 else np.int16
        self.cum_pi = np.cumsum(gibbs.stationary)
        self.cum_pi[-1] = 1.0
        self.cumQ = np.cumsum(gibbs.stochastic, axis=1)
        self.cumQ[:, -1] = 1.0

    def _pick(self, cum, u):
        return np.minimum(np.searchsorted(cum, u, side="right"), self.m - 1).astype(self.dtype)

    def start(self, rng, n: int, length: int) -> np.ndarray:
        u = rng.random((n, length))
        if self.iid:
            return self._pick(self.cum_pi, u)
        out = np.empty((n, length), dtype=self.dtype)
        out[:, 0] = self._pick(self.cum_pi, u[:, 0])
        self._fill(out, u, 1)
        return out

    def extend(self, rng, last: np.ndarray, length: int) -> np.ndarray:
        u = rng.random((last.shape[0], length))
        if self.iid:
            return self._pick(self.cum_pi, u)
        out = np.empty((last.shape[0], length + 1), dtype=self.dtype)
        out[:, 0] = last
        self._fill(out, np.hstack([np.zeros((last.shape[0], 1)), u]), 1)
        return out[:, 1:]

    def continue_prefixes(self, rng, prefixes: np.ndarray, lengths: np.ndarray, total: int):
        """Rows start with their prefix (first ``lengths[i]`` entries) and continue the chain."""
        n = prefixes.shape[0]
        u = rng.random((n, total))
        out = np.zeros((n, total), dtype=self.dtype)
        width = prefixes.shape[1]
        out[:, :width] = prefixes
        if self.iid:
            fresh = self._pick(self.cum_pi, u)
            cols = np.arange(total)[None, :]
            return np.where(cols < lengths[:, None], out, fresh).astype(self.dtype)
        for t in range(1, total):
            nxt = self._next(out[:, t - 1], u[:, t])
            out[:, t] = np.where(t < lengths, out[:, t], nxt)
        return out

    def _next(self, prev, u):
        return np.minimum((u[:, None] >= self.cumQ[prev]).sum(axis=1), self.m - 1).astype(self.dtype)

    def _fill(self, out, u, start):
        for t in range(start, out.shape[1]):
            out[:, t] = self._next(out[:, t - 1], u[:, t])


# targets ----------------------------------------------------------------


def _distance_enclosure(a, b, c_lo, c_hi):
    lo = max(Fraction(0), a - c_hi, c_lo - b)
    hi = max(b - c_lo, c_hi - a)
    return lo, hi


class _BallTarget:
    """|g^n x - c| < radius, with c fixed or c = x (self-return)."""

    def __init__(self, mp: MarkovMap, radius, center=None):
        self.mp = mp
        self.radius = to_fraction(radius)
        self.radius_f = float(self.radius)
        self.fixed = center is not None
        if self.fixed:
            self.center = to_fraction(center)
            self.center_f = float(self.center)
        self.margin = 4 * mp.position_slack

    def init(self, buf):
        L = self.mp.lookahead
        if not self.fixed:
            self.c = positions(self.mp, buf[:, : L + 1])[:, 0]
            self.prefix = buf[:, : L + EXTRA].copy()

    def keep(self, mask):
        if not self.fixed:
            self.c = self.c[mask]
            self.prefix = self.prefix[mask]

    def _center(self, row):
        if self.fixed:
            return self.center, self.center
        return cylinder(self.mp, self.prefix[row])

    def exact(self, row, segment):
        a, b = cylinder(self.mp, segment)
        c_lo, c_hi = self._center(row)
        lo, hi = _distance_enclosure(a, b, c_lo, c_hi)
        if hi < self.radius:
            return True
        if lo >= self.radius:
            return False
        return None

    def scan(self, buf, t0, t1):
        L = self.mp.lookahead
        pos = positions(self.mp, buf[:, : t1 - t0 + L])
        c = self.center_f if self.fixed else self.c[:, None]
        dist = np.abs(pos - c)
        sure = dist < self.radius_f - self.margin
        amb = np.abs(dist - self.radius_f) <= self.margin
        return sure, amb


class _CylinderTarget:
    def __init__(self, mp, word):
        self.mp = mp
        self.word = np.asarray(word)

    def init(self, buf):
        pass

    def keep(self, mask):
        pass

    def scan(self, buf, t0, t1):
        width = t1 - t0
        hit = np.ones((buf.shape[0], width), dtype=bool)
        for j, s in enumerate(self.word):
            hit &= buf[:, j : j + width] == s
        return hit, np.zeros_like(hit)

    def exact(self, row, segment):
        return None


def _first_hits(mp, chain, rng, buf, target, horizon):
    """First n in [1, horizon] with g^n x in the target, per row of ``buf``.

    Returns ``(times, undecided)``; ``times`` is 0 for rows with no visit by
    ``horizon`` and for undecided rows.
    """
    n = buf.shape[0]
    L = mp.lookahead
    times = np.zeros(n, dtype=np.int64)
    undecided = np.zeros(n, dtype=bool)
    idx = np.arange(n)
    target.init(buf)
    t0, chunk = 0, 64
    while idx.size and t0 <= horizon:
        t1 = min(t0 + chunk, horizon + 1)
        need = t1 - t0 + L + EXTRA
        if buf.shape[1] < need:
            buf = np.hstack([buf, chain.extend(rng, buf[:, -1], need - buf.shape[1])])
        sure, amb = target.scan(buf, t0, t1)
        if t0 == 0:
            sure[:, 0] = False
            amb[:, 0] = False
        cand = sure | amb
        rows = np.flatnonzero(cand.any(axis=1))
        done = np.zeros(idx.size, dtype=bool)
        for i in rows:
            for col in np.flatnonzero(cand[i]):
                if sure[i, col]:
                    verdict = True
                else:
                    verdict = target.exact(i, buf[i, col:])
                if verdict is None:
                    undecided[idx[i]] = True
                    done[i] = True
                    break
                if verdict:
                    times[idx[i]] = t0 + col
                    done[i] = True
                    break
        keep = ~done
        idx = idx[keep]
        buf = buf[keep][:, t1 - t0 :]
        target.keep(keep)
        t0 = t1
        chunk = int(min(2 * chunk, 4096, max(64, BUDGET // max(idx.size, 1) - L - EXTRA)))
    return times, undecided


def _initial_length(mp):
    return mp.lookahead + EXTRA + 65


# single-point exact routines ------------------------------------------


def _as_symbolic(mp, p, depth):
    if isinstance(p, SymbolicPoint):
        return p, None
    x = to_fraction(p)
    return encode(mp, x, depth), x


def return_time(mp: MarkovMap, p, r, cap: int, deepen=None):
    """First n in [1, cap] with |g^n x - x| < r, or ``Censored(cap)``.

    ``p`` is a :class:`SymbolicPoint` (decided from cylinder enclosures,
    calling ``deepen(p, extra)`` for more symbols when needed) or an exact
    rational point (orbit iterated exactly).
    """
    r = to_fraction(r)
    if r <= 0:
        raise BadInput("radius must be positive")
    if not isinstance(p, SymbolicPoint):
        x = to_fraction(p)
        y = x
        for n in range(1, cap + 1):
            y = mp.branches[mp.branch_of(y)].forward(y)
            if abs(y - x) < r:
                return n
        return Censored(cap)
    for n in range(1, cap + 1):
        while True:
            try:
                if p.depth <= n:
                    raise InsufficientDepth("word too short")
                a0, b0 = cylinder(mp, p.word)
                ak, bk = cylinder(mp, p.word[n:])
                lo, hi = _distance_enclosure(ak, bk, a0, b0)
                if hi < r:
                    return n
                if lo >= r:
                    break
                raise InsufficientDepth("enclosure straddles the radius")
            except InsufficientDepth:
                if deepen is None:
                    raise
                p = deepen(p, max(16, n + 16 - p.depth))
    return Censored(cap)


def hitting_time_set(mp: MarkovMap, p, target, cap: int, deepen=None):
    """First n in [1, cap] with g^n x in the closed interval ``target``."""
    lo_t, hi_t = (to_fraction(v) for v in target)
    if not isinstance(p, SymbolicPoint):
        y = to_fraction(p)
        for n in range(1, cap + 1):
            y = mp.branches[mp.branch_of(y)].forward(y)
            if lo_t <= y <= hi_t:
                return n
        return Censored(cap)
    for n in range(1, cap + 1):
        while True:
            try:
                if p.depth <= n:
                    raise InsufficientDepth("word too short")
                a, b = cylinder(mp, p.word[n:])
                if lo_t <= a and b <= hi_t:
                    return n
                if b <= lo_t or a > hi_t:
                    break
                raise InsufficientDepth("cylinder straddles the target boundary")
            except InsufficientDepth:
                if deepen is None:
                    raise
                p = deepen(p, 16)
    return Censored(cap)


# samplers -------------------------------------------------------------


def _sample_in_interval(mp, chain, rng, pieces, n, length):
    """``n`` words of ``length`` symbols drawn from mu restricted to the pieces' interval."""
    cum = np.cumsum(pieces.masses)
    cum /= cum[-1]
    maxlen = max(len(w) for w in pieces.words)
    table = np.zeros((len(pieces.words), maxlen), dtype=chain.dtype)
    lens = np.array([len(w) for w in pieces.words])
    for i, w in enumerate(pieces.words):
        table[i, : len(w)] = w
    u_lo, u_hi = pieces.u, pieces.v
    margin = 4 * mp.position_slack
    out = []
    got = 0
    rejected = 0
    while got < n:
        want = n - got
        k = np.minimum(np.searchsorted(cum, rng.random(want), side="right"), len(cum) - 1)
        words = chain.continue_prefixes(rng, table[k], lens[k], max(length, maxlen + 1))
        ok = ~pieces.straddle[k]
        strad = np.flatnonzero(pieces.straddle[k])
        if strad.size:
            x = positions(mp, words[strad, : mp.lookahead + 1])[:, 0]
            inside = (x > float(u_lo) + margin) & (x < float(u_hi) - margin)
            outside = (x < float(u_lo) - margin) | (x > float(u_hi) + margin)
            for j, row in enumerate(strad):
                if inside[j]:
                    ok[row] = True
                elif not outside[j]:
                    a, b = cylinder(mp, words[row, : mp.lookahead + EXTRA])
                    ok[row] = bool(a >= u_lo and b <= u_hi)
        rejected += int((~ok).sum())
        out.append(words[ok])
        got += int(ok.sum())
    return np.vstack(out)[:n]


def _ball_survival_block(gibbs, chain, center, radius, mu_b, t_grid, pieces, rng, count):
    mp = gibbs.map
    horizon = int(math.floor(max(t_grid) / mu_b))
    buf = _sample_in_interval(mp, chain, rng, pieces, count, _initial_length(mp))
    target = _BallTarget(mp, radius, center)
    times, und = _first_hits(mp, chain, rng, buf, target, horizon)
    return times, und


def _survival(gibbs, center, radius, t_grid, n, seed, tag, index, workers):
    chain = _Chain(gibbs)
    center = to_fraction(center)
    radius = to_fraction(radius)
    u, v = ball_interval(center, radius)
    mu_b = ball_measure(gibbs, center, radius, tol=None, rtol=1e-10).value
    pieces = interval_pieces(gibbs, u, v)

    def block(b, s, e):
        rng = stream(seed, tag, *index, b)
        return _ball_survival_block(gibbs, chain, center, radius, mu_b, t_grid, pieces, rng, e - s)

    parts = _run_blocks(block, n, workers)
    times = np.concatenate([p[0] for p in parts])
    und = np.concatenate([p[1] for p in parts])
    t_grid = np.asarray(t_grid, dtype=float)
    limits = np.floor(t_grid / mu_b)
    # tau > t/mu(B)  <=>  no visit by floor(t/mu(B))
    returned = times > 0
    surv = np.array([np.mean(~(returned & (times <= lim))) for lim in limits])
    return surv, mu_b, int(und.sum())


@dataclass(frozen=True)
class SurvivalCurve:
    t_grid: np.ndarray
    survival: np.ndarray
    mu_ball: float
    n: int
    undecided: int


def conditional_return_cdf(gibbs: GibbsMeasure, x0, r, t_grid, n: int, seed: int, workers: int = 1):
    """S(t) = mu_B(tau_B > t / mu(B)) for B = B(x0, 2r), by conditional sampling."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise BadInput("t_grid must be positive")
    surv, mu_b, und = _survival(
        gibbs, x0, 2 * to_fraction(r), t_grid, n, seed, "conditional_return", (0,), workers
    )
    return SurvivalCurve(t_grid, surv, mu_b, n, und)


def kac_check(gibbs: GibbsMeasure, word, n_samples: int, seed: int, workers: int = 1, cap: int = 10**7):
    """mean(tau_A) * mu(A) for x ~ mu conditioned on the cylinder A; returns (value, stderr)."""
    mp = gibbs.map
    word = tuple(int(s) for s in word)
    if not mp.is_admissible(word) or not word:
        raise BadInput(f"word {word} is not an admissible cylinder")
    mu_a = gibbs.cylinder_mass(word)
    chain = _Chain(gibbs)
    k = len(word)
    prefix = np.array(word, dtype=chain.dtype)[None, :]

    def block(b, s, e):
        rng = stream(seed, "kac", *word, b)
        cnt = e - s
        buf = chain.continue_prefixes(
            rng, np.repeat(prefix, cnt, axis=0), np.full(cnt, k), _initial_length(mp) + k
        )
        return _first_hits(mp, chain, rng, buf, _CylinderTarget(mp, word), cap)[0]

    times = np.concatenate(_run_blocks(block, n_samples, workers))
    if np.any(times == 0):
        raise InvalidEstimate("some samples did not return before the cap")
    prod = times * mu_a
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(n_samples))


# tail estimates and fits ---------------------------------------------


def fit_rate(estimates, min_hits: int = 10) -> RateFit:
    """Weighted least-squares slope of log p_hat against log r.

    Weights are the inverse delta-method variances n p / (1 - p). With fewer
    than two usable points the surrogate is the exponent certified by the
    Wilson upper bounds with unit prefactor, min_r log(ci_high) / log r.
    """
    use = [e for e in estimates if e.hits >= min_hits and not e.invalid and e.p_hat > 0]
    if len(use) >= 2:
        x = np.log([e.r for e in use])
        y = np.log([e.p_hat for e in use])
        w = np.array([e.n * e.p_hat / max(1 - e.p_hat, 1e-12) for e in use])
    else:
        use = [e for e in estimates if not e.invalid]
        if len(use) < 2:
            raise InvalidEstimate("fewer than two valid estimates to fit")
        x = np.log([e.r for e in use])
        y = np.log([e.ci_high for e in use])
        ratios = y / x
        k = int(np.argmin(ratios))
        return RateFit(
            points=list(zip(x.tolist(), y.tolist())),
            slope=float(ratios[k]),
            stderr=math.nan,
            r_grid=[e.r for e in estimates],
            intercept=0.0,
            surrogate=True,
            estimates=list(estimates),
        )
    if len(use) == 2:
        slope = (y[1] - y[0]) / (x[1] - x[0])
        intercept = y[0] - slope * x[0]
        se = math.sqrt(sum(1 / wi for wi in w)) / abs(x[1] - x[0])
    else:
        coef, cov = np.polyfit(x, y, 1, w=np.sqrt(w), cov="unscaled")
        slope, intercept = coef
        se = math.sqrt(cov[0, 0])
    return RateFit(
        points=list(zip(x.tolist(), y.tolist())),
        slope=float(slope),
        stderr=float(se),
        r_grid=[e.r for e in estimates],
        intercept=float(intercept),
        surrogate=False,
        estimates=list(estimates),
    )


def _estimate(r, expo, hits, n, censored, invalid=False, undecided=0, kind="ge"):
    lo, hi = wilson(hits, n)
    return TailEstimate(float(r), float(expo), int(hits), int(n), hits / n, lo, hi,
                        int(censored), invalid, int(undecided), kind)


def empirical_tail(
    gibbs: GibbsMeasure,
    eps: float,
    r_grid,
    n_per_r: int,
    cap_factor: float = 10.0,
    seed: int = 0,
    workers: int = 1,
    d_mu=None,
):
    """Tail probabilities of tau_r and their log-log rate fit.

    ``eps > 0``: event tau_r >= r^-(d + eps); ``eps < 0``: event
    tau_r <= r^-(d - |eps|). The scan stops as soon as the event is decided,
    so ``censored`` counts samples with no return within the decision horizon.
    """
    if eps == 0:
        raise BadInput("eps must be nonzero")
    mp = gibbs.map
    d = dimension(gibbs) if d_mu is None else d_mu
    chain = _Chain(gibbs)
    kind = "ge" if eps > 0 else "le"
    expo = d + eps
    out = []
    for ri, r in enumerate(r_grid):
        r = float(r)
        thr = r ** (-expo)
        cap = cap_factor * r ** (-(d + abs(eps)))
        if kind == "ge":
            horizon = int(math.ceil(thr)) - 1
            invalid = cap < thr
        else:
            horizon = int(math.floor(thr))
            invalid = False
        horizon = int(min(horizon, cap))

        def block(b, s, e, r=r, ri=ri, horizon=horizon):
            rng = stream(seed, f"tail_{kind}", ri, b)
            buf = chain.start(rng, e - s, _initial_length(mp))
            return _first_hits(mp, chain, rng, buf, _BallTarget(mp, r), horizon)

        parts = _run_blocks(block, n_per_r, workers)
        times = np.concatenate([p[0] for p in parts])
        und = int(np.concatenate([p[1] for p in parts]).sum())
        no_return = int(np.sum(times == 0)) - und
        if kind == "ge":
            hits = no_return
        else:
            hits = int(np.sum(times > 0))
        out.append(_estimate(r, expo, hits, n_per_r, no_return, invalid, und, kind))
    return out, fit_rate(out)


def level_set_tail(gibbs: GibbsMeasure, eps: float, r_grid, n_per_r: int, seed: int = 0,
                   workers: int = 1, d_mu=None):
    """Frequency of mu(B(x, r)) <= r^(d + eps) for x ~ mu, from exact ball measures.

    Undecided classifications (enclosure straddling the threshold) are
    counted as events and reported.
    """
    mp = gibbs.map
    d = dimension(gibbs) if d_mu is None else d_mu
    chain = _Chain(gibbs)
    out = []
    for ri, r in enumerate(r_grid):
        r = float(r)

        def block(b, s, e, r=r, ri=ri):
            rng = stream(seed, "level_set", ri, b)
            buf = chain.start(rng, e - s, mp.lookahead + 1)
            xs = positions(mp, buf)[:, 0]
            hits = und = 0
            for x in xs:
                v = classify_level_set(gibbs, Fraction(float(x)), r, "A_eps", eps, d_mu=d)
                if v is None:
                    und += 1
                    hits += 1
                elif not v:
                    hits += 1
            return hits, und

        parts = _run_blocks(block, n_per_r, workers)
        hits = sum(p[0] for p in parts)
        und = sum(p[1] for p in parts)
        out.append(_estimate(r, d + eps, hits, n_per_r, 0, False, und, "level"))
    return out, fit_rate(out)


def sample_centers(gibbs: GibbsMeasure, n: int, seed: int, tag: str, index=()):
    """``n`` exact rational centers distributed as mu (to within 1e-15)."""
    mp = gibbs.map
    chain = _Chain(gibbs)
    rng = stream(seed, tag, *index)
    buf = chain.start(rng, n, mp.lookahead + 1)
    return [Fraction(float(x)) for x in positions(mp, buf)[:, 0]]


def exp_law_check(gibbs: GibbsMeasure, r, n_centers: int, n_inner: int, t_grid, a: float,
                  b: float, seed: int = 0, workers: int = 1):
    """Per center, D = max_t |S(t) - e^-t| on the ball B(x0, r); bad centers have D > r^a.

    Returns ``(fraction_bad, worst_deviation, verdict, deviations)`` with
    verdict ``fraction_bad <= r^b``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise BadInput("t_grid must be positive")
    r = to_fraction(r)
    centers = sample_centers(gibbs, n_centers, seed, "exp_law_centers")
    devs = []
    for i, c in enumerate(centers):
        surv, _, _ = _survival(gibbs, c, r, t_grid, n_inner, seed, "exp_law", (i,), workers)
        devs.append(float(np.max(np.abs(surv - np.exp(-t_grid)))))
    devs = np.array(devs)
    rf = float(r)
    frac = float(np.mean(devs > rf**a))
    return frac, float(devs.max()), frac <= rf**b, devs


def phi_rate_estimate(gibbs: GibbsMeasure, a: float, eps: float, C: float, r_grid,
                      n_centers: int, n_inner: int, seed: int = 0, workers: int = 1,
                      d_mu=None, max_undecided: float = 0.2):
    """Measure of centers whose conditional quick-return probability is >= C r^a.

    The ball is B(x0, 2r) and a quick return is tau_B <= r^-(d - eps).
    Centers whose Wilson interval straddles C r^a count as events; more than
    ``max_undecided`` of them marks the radius invalid.
    """
    mp = gibbs.map
    d = dimension(gibbs) if d_mu is None else d_mu
    chain = _Chain(gibbs)
    out = []
    for ri, r in enumerate(r_grid):
        r_fr = to_fraction(float(r))
        rf = float(r_fr)
        thr = C * rf**a
        horizon = int(math.floor(rf ** (-(d - eps))))
        centers = sample_centers(gibbs, n_centers, seed, "phi_centers", (ri,))
        events = undecided = 0
        for ci, c in enumerate(centers):
            radius = 2 * r_fr
            u, v = ball_interval(c, radius)
            pieces = interval_pieces(gibbs, u, v)

            def block(b, s, e, c=c, radius=radius, pieces=pieces, ci=ci, ri=ri):
                rng = stream(seed, "phi_inner", ri, ci, b)
                buf = _sample_in_interval(mp, chain, rng, pieces, e - s, _initial_length(mp))
                return _first_hits(mp, chain, rng, buf, _BallTarget(mp, radius, c), horizon)

            parts = _run_blocks(block, n_inner, workers)
            times = np.concatenate([p[0] for p in parts])
            quick = int(np.sum(times > 0))
            lo, hi = wilson(quick, n_inner)
            if lo >= thr:
                events += 1
            elif hi >= thr:
                events += 1
                undecided += 1
        invalid = undecided > max_undecided * n_centers
        out.append(_estimate(rf, a, events, n_centers, 0, invalid, undecided, "phi"))
    return fit_rate(out)


# constants for the fast-return bound ----------------------------------


@dataclass(frozen=True)
class FastReturnConstants:
    d3: float
    c0: float
    d1: float
    d2: float
    xi: float
    a0: float
    a0_empirical: float | None = None
    a0_stderr: float | None = None


def _short_return(mp, x, r, K):
    """Whether B(x, r) meets g^-k B(x, r) for some 1 <= k <= K, decided exactly."""
    u, v = ball_interval(x, r)
    # intervals (lo, hi, word) of points of B sharing an itinerary of length k
    pieces = [(u, v)]
    for k in range(1, K + 1):
        nxt = []
        for lo, hi in pieces:
            i = mp.branch_of(lo)
            while True:
                b = mp.branches[i]
                a0, b0 = max(lo, b.lo), min(hi, b.hi)
                if a0 < b0 or (a0 == b0 and lo == hi):
                    nxt.append((b.forward(a0), b.forward(b0)))
                if b.hi >= hi or i == mp.m - 1:
                    break
                i += 1
        pieces = nxt
        for lo, hi in pieces:
            if lo <= v and hi >= u:
                return True
    return False


def fast_return_constants(gibbs: GibbsMeasure, profile: RateProfile | None = None,
                          r_grid=None, n_per_r: int = 0, seed: int = 0) -> FastReturnConstants:
    """Surrogates for the constants a0 and d2 of the fast-return bound.

    d3 is the smallest local dimension, c0 = d / (2 log m) the short-period
    scale, d1 = c0 log beta and d2 = d3 d1. With xi = d / (4 log m),
    a0 = min{d - xi - c0 log m, psi(-xi)}. Given ``r_grid`` and ``n_per_r``
    the decay exponent of mu{x : B(x,r) meets g^-k B(x,r), k <= c0 log(1/r)}
    is also measured.
    """
    mp = gibbs.map
    d = dimension(gibbs)
    lo, hi = local_dimension_range(gibbs)
    d3 = -hi
    logm = math.log(max(mp.degree, 2))
    c0 = d / (2 * logm)
    d1 = c0 * math.log(float(mp.beta))
    d2 = d3 * d1
    xi = d / (4 * logm)
    first = d - xi - c0 * logm
    psi_m = psi_rate(profile, -xi) if profile is not None else math.inf
    a0 = min(first, psi_m)
    a0_emp = a0_se = None
    if r_grid is not None and n_per_r > 0:
        ests = []
        for ri, r in enumerate(r_grid):
            r_fr = to_fraction(float(r))
            K = max(1, int(math.floor(c0 * math.log(1 / float(r)))))
            centers = sample_centers(gibbs, n_per_r, seed, "short_return", (ri,))
            hits = sum(_short_return(mp, c, r_fr, K) for c in centers)
            ests.append(_estimate(float(r), 0.0, hits, n_per_r, 0, kind="short"))
        try:
            fit = fit_rate(ests)
            a0_emp, a0_se = fit.slope, fit.stderr
        except InvalidEstimate:
            pass
    return FastReturnConstants(d3, c0, d1, d2, xi, a0, a0_emp, a0_se)
