"""Pressure, Gibbs measures and the dimension spectrum T(q).

Potentials are locally constant on the branch partition, so the transfer
operator restricted to them is the m x m matrix ``M_ij = A_ij exp(z_j)``
and every quantity below is a finite-dimensional Perron-Frobenius problem.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.optimize import brentq

from .dynamics import MarkovMap
from .errors import (
    BadInput,
    BracketFailure,
    InconsistentDimension,
    InconsistentVariance,
    NoConvergence,
)

FD_STEP = 1e-3
VARIANCE_STEP = 1e-3
MAXIMAL_DIMENSION_TOL = 1e-9


@dataclass(frozen=True)
class Potential:
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or not np.all(np.isfinite(vals)):
            raise BadInput("potential must be a finite vector")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_weights(cls, weights) -> "Potential":
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0):
            raise BadInput("log-weights need positive weights")
        return cls(np.log(w))


def perron(mp: MarkovMap, values, max_squarings: int = 200):
    """Log spectral radius and Perron vectors of ``A_ij exp(values_j)``.

    Power iteration on the normalised matrix powers ``M^(2^k)``; primitivity
    of A makes the iterates converge to the rank-one Perron projector.
    Returns ``(log_radius, right, left)`` with both vectors summing to one.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (mp.m,):
        raise BadInput(f"potential has length {values.shape}, expected {mp.m}")
    shift = values.max()
    M = mp.transition * np.exp(values - shift)[None, :]
    B = M / M.sum()
    prev = None
    for _ in range(max_squarings):
        B = B @ B
        total = B.sum()
        if not np.isfinite(total) or total == 0:
            raise NoConvergence("matrix powers degenerated")
        B /= total
        if prev is not None and np.max(np.abs(B - prev)) <= 8 * np.finfo(float).eps * B.max():
            break
        prev = B.copy()
    else:
        raise NoConvergence("power iteration did not settle")
    right = B.sum(axis=1)
    left = B.sum(axis=0)
    # a few plain power steps polish the vectors
    for _ in range(3):
        right = M @ right
        right /= right.sum()
        left = left @ M
        left /= left.sum()
    lam = float(left @ M @ right / (left @ right))
    if not lam > 0:
        raise NoConvergence("non-positive Perron root")
    return math.log(lam) + shift, right, left


def pressure(mp: MarkovMap, potential) -> float:
    values = potential.values if isinstance(potential, Potential) else potential
    return perron(mp, values)[0]


@dataclass
class GibbsMeasure:
    """Markov measure equal to the equilibrium state of a locally constant potential."""

    map: MarkovMap
    potential: Potential
    stochastic: np.ndarray
    stationary: np.ndarray
    pressure: float
    kappa: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def log_psi(self) -> np.ndarray:
        """Normalised potential ``z - P(z)``; its pressure is zero."""
        return self.potential.values - self.pressure

    @property
    def is_bernoulli(self) -> bool:
        Q = self.stochastic
        return bool(np.all(self.map.transition == 1) and np.allclose(Q, Q[0], rtol=0, atol=1e-14))

    @property
    def probabilities(self) -> np.ndarray:
        if not self.is_bernoulli:
            raise BadInput("measure is not Bernoulli")
        return self.stationary.copy()

    def cylinder_mass(self, word) -> float:
        word = tuple(int(s) for s in word)
        if not word:
            return 1.0
        mass = self.stationary[word[0]]
        for a, b in zip(word[:-1], word[1:]):
            mass *= self.stochastic[a, b]
        return float(mass)


def gibbs_measure(mp: MarkovMap, potential, n_check: int = 8) -> GibbsMeasure:
    if not isinstance(potential, Potential):
        potential = Potential(potential)
    P, h, l = perron(mp, potential.values)
    lam = math.exp(P)
    z = potential.values
    Q = mp.transition * np.exp(z)[None, :] * h[None, :] / (lam * h[:, None])
    Q /= Q.sum(axis=1, keepdims=True)
    pi = l * h
    pi /= pi.sum()
    if np.max(np.abs(pi @ Q - pi)) > 1e-12:
        raise NoConvergence("stationary vector failed the invariance check")
    kappa = _gibbs_constant(mp, z, P, h, pi, n_check)
    return GibbsMeasure(mp, potential, Q, pi, P, kappa)


def _gibbs_constant(mp, z, P, h, pi, n_check) -> float:
    # ratio of cylinder mass to exp(S_n z - nP) only depends on the first and
    # last symbols: pi_a h_b e^P / (h_a e^{z_a})
    ratio = pi[:, None] * h[None, :] * math.exp(P) / (h[:, None] * np.exp(z)[:, None])
    reach = np.eye(mp.m, dtype=bool)
    worst = 1.0
    for _ in range(n_check):
        r = ratio[reach]
        worst = max(worst, float(np.max(r)), float(np.max(1 / r)))
        reach = (reach.astype(np.int64) @ mp.transition) > 0
    return worst


def brute_force_gibbs_constant(gibbs: GibbsMeasure, n_check: int = 8) -> float:
    """Worst Gibbs ratio over every admissible word up to ``n_check`` symbols."""
    mp = gibbs.map
    z = gibbs.potential.values
    worst = 1.0
    for n in range(1, n_check + 1):
        for word in itertools.product(range(mp.m), repeat=n):
            if not mp.is_admissible(word):
                continue
            r = gibbs.cylinder_mass(word) / math.exp(sum(z[s] for s in word) - n * gibbs.pressure)
            worst = max(worst, r, 1 / r)
    return worst


def spectrum_T(gibbs: GibbsMeasure, q: float) -> float:
    """Unique T with ``P(-T log s + q log psi) = 0``."""
    q = float(q)
    cache = gibbs._cache.setdefault("T", {})
    if q in cache:
        return cache[q]
    mp = gibbs.map
    log_s = mp.log_slopes
    log_psi = gibbs.log_psi

    def f(T):
        return perron(mp, -T * log_s + q * log_psi)[0]

    # on a full shift T solves sum_i psi_i^q s_i^-T = 1; the exponents
    # -q * log psi_i / log s_i give a bracket up to +-1
    rho = -q * log_psi / log_s
    lo, hi = _expand_bracket(f, float(rho.min()) - 2.0, float(rho.max()) + 2.0)
    T = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    cache[q] = T
    return T


def _expand_bracket(f, lo, hi, tries: int = 60):
    flo, fhi = f(lo), f(hi)
    for _ in range(tries):
        if flo > 0 > fhi or flo == 0 or fhi == 0:
            return lo, hi
        width = hi - lo
        if flo <= 0:
            lo -= width
            flo = f(lo)
        if fhi >= 0:
            hi += width
            fhi = f(hi)
    raise BracketFailure("could not bracket the root of the pressure equation")


def moran_T(probabilities, ratios, q):
    """Root T of ``sum_i p_i^q a_i^T = 1`` by bisection (vectorised over q).

    Closed-form oracle for full-branch maps with Bernoulli measures:
    ``a_i = 1/s_i`` are the contraction ratios.
    """
    p = np.asarray(probabilities, dtype=float)
    a = np.asarray(ratios, dtype=float)
    if p.ndim != 1 or p.shape != a.shape or np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
        raise BadInput("probabilities must be positive and sum to one")
    if np.any(a <= 0) or np.any(a >= 1):
        raise BadInput("ratios must lie in (0, 1)")
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    lp, la = np.log(p), np.log(a)

    def g(T):
        return np.log(np.sum(np.exp(qs[:, None] * lp[None, :] + T[:, None] * la[None, :]), axis=1))

    rho = -qs[:, None] * (lp / la)[None, :]
    lo = rho.min(axis=1) - 2.0
    hi = rho.max(axis=1) + 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pos = g(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(mid))):
            break
    out = 0.5 * (lo + hi)
    return out if np.ndim(q) else float(out[0])


def spectrum_slope(gibbs: GibbsMeasure, q: float) -> float:
    """T'(q) from the equilibrium state of the potential at q.

    Differentiating ``P(-T(q) log s + q log psi) = 0`` gives
    ``T'(q) = E_q[log psi] / E_q[log s]`` with ``E_q`` the symbol marginal
    ``l * h`` of the Perron vectors.
    """
    T = spectrum_T(gibbs, q)
    mp = gibbs.map
    _, h, l = perron(mp, -T * mp.log_slopes + q * gibbs.log_psi)
    w = l * h
    return float((w @ gibbs.log_psi) / (w @ mp.log_slopes))


def spectrum_derivative(gibbs: GibbsMeasure, q: float, h: float = FD_STEP) -> float:
    """T'(q) by central differences with one Richardson step."""

    def central(step):
        return (spectrum_T(gibbs, q + step) - spectrum_T(gibbs, q - step)) / (2 * step)

    return (4 * central(h / 2) - central(h)) / 3


def spectrum_second_derivative(gibbs: GibbsMeasure, q: float, h: float = FD_STEP) -> float:
    t0 = spectrum_T(gibbs, q)

    def second(step):
        return (spectrum_T(gibbs, q + step) - 2 * t0 + spectrum_T(gibbs, q - step)) / step**2

    return (4 * second(h / 2) - second(h)) / 3


def hp_spectrum(gibbs: GibbsMeasure, q: float) -> float:
    """The ratio ``T(q) / (1 - q)``; undefined at q = 1."""
    if q == 1:
        raise BadInput("T(q)/(1-q) is undefined at q = 1")
    return spectrum_T(gibbs, q) / (1 - q)


def entropy(gibbs: GibbsMeasure) -> float:
    Q = gibbs.stochastic
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Q > 0, Q * np.log(Q), 0.0)
    return float(-gibbs.stationary @ terms.sum(axis=1))


def lyapunov(gibbs: GibbsMeasure) -> float:
    return float(gibbs.stationary @ gibbs.map.log_slopes)


def dimension(gibbs: GibbsMeasure, tol: float = 1e-6) -> float:
    """d_mu = -T'(1), cross-checked against entropy / Lyapunov exponent."""
    cache = gibbs._cache
    if "d_mu" in cache:
        return cache["d_mu"]
    d_fd = -spectrum_derivative(gibbs, 1.0)
    d_ratio = entropy(gibbs) / lyapunov(gibbs)
    if abs(d_fd - d_ratio) > tol:
        raise InconsistentDimension(
            f"-T'(1) = {d_fd!r} but entropy/lyapunov = {d_ratio!r}"
        )
    cache["d_mu"] = d_fd
    return d_fd


def _centred_observable(gibbs: GibbsMeasure) -> np.ndarray:
    # the observable whose fluctuations set T''(1): log psi + d_mu log|a|
    return gibbs.log_psi + dimension(gibbs) * gibbs.map.log_slopes


def variance(gibbs: GibbsMeasure, rtol: float = 1e-5) -> float:
    """Asymptotic variance of ``log psi + d_mu log|a|`` under the Gibbs measure.

    Second derivative of ``t -> P(log psi + t Y)`` at 0 by symmetric
    differences (steps 1e-3 and 5e-4, Richardson-combined), checked against
    the Markov-chain formula (the i.i.d. variance for Bernoulli measures).
    """
    if "variance" in gibbs._cache:
        return gibbs._cache["variance"]
    mp = gibbs.map
    base = gibbs.log_psi
    Y = _centred_observable(gibbs)
    p0 = perron(mp, base)[0]

    def second(step):
        return (perron(mp, base + step * Y)[0] - 2 * p0 + perron(mp, base - step * Y)[0]) / step**2

    h = VARIANCE_STEP
    fd = (4 * second(h / 2) - second(h)) / 3
    direct = chain_variance(gibbs, Y)
    scale = max(abs(direct), 1e-4)
    if abs(fd - direct) > rtol * scale:
        raise InconsistentVariance(f"pressure route {fd!r} vs chain route {direct!r}")
    gibbs._cache["variance"] = fd
    return fd


def chain_variance(gibbs: GibbsMeasure, values) -> float:
    """Asymptotic variance of a symbol observable along the Markov chain."""
    y = np.asarray(values, dtype=float)
    pi, Q = gibbs.stationary, gibbs.stochastic
    if gibbs.is_bernoulli:
        mean = pi @ y
        return float(pi @ (y - mean) ** 2)
    m = len(pi)
    fbar = y - pi @ y
    Z = np.linalg.inv(np.eye(m) - Q + np.outer(np.ones(m), pi))
    return float(pi @ (fbar * (2 * (Z @ fbar) - fbar)))


@dataclass(frozen=True)
class Curvature:
    from_spectrum: float
    from_variance: float
    discrepancy: float
    lyapunov: float
    variance: float

    @property
    def value(self) -> float:
        return self.from_variance


def curvature(gibbs: GibbsMeasure) -> Curvature:
    """Quadratic coefficient of the rate function at its minimum, two ways.

    ``(1/2) / T''(1)`` from the spectrum and ``(1/2) lambda / sigma^2`` from
    the Lyapunov exponent and the variance. For the measure of maximal
    dimension both are +inf.
    """
    lam = lyapunov(gibbs)
    if is_maximal_dimension(gibbs):
        inf = math.inf
        return Curvature(inf, inf, 0.0, lam, 0.0)
    sig2 = variance(gibbs)
    t2 = spectrum_second_derivative(gibbs, 1.0)
    c_spec = 0.5 / t2
    c_var = 0.5 * lam / sig2
    return Curvature(c_spec, c_var, abs(c_spec - c_var) / abs(c_var), lam, sig2)


def local_dimension_range(gibbs: GibbsMeasure) -> tuple[float, float]:
    """Closure of the range of T': extreme cycle averages of log psi / log s."""
    cache = gibbs._cache
    if "support" in cache:
        return cache["support"]
    mp = gibbs.map
    graph = nx.DiGraph()
    graph.add_nodes_from(range(mp.m))
    graph.add_edges_from(zip(*np.nonzero(mp.transition)))
    lpsi, ls = gibbs.log_psi, mp.log_slopes
    ratios = [
        sum(lpsi[i] for i in cyc) / sum(ls[i] for i in cyc)
        for cyc in nx.simple_cycles(graph)
    ]
    cache["support"] = (min(ratios), max(ratios))
    return cache["support"]


def is_maximal_dimension(gibbs: GibbsMeasure) -> bool:
    """True when T is affine (all periodic averages of log psi / log s agree)."""
    lo, hi = local_dimension_range(gibbs)
    return hi - lo <= MAXIMAL_DIMENSION_TOL


@dataclass(frozen=True)
class SpectrumTable:
    q_grid: np.ndarray
    T_values: np.ndarray
    d_mu: float
    T2_at_1: float
    maximal_dimension_flag: bool

    def hp(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.q_grid != 1, self.T_values / (1 - self.q_grid), np.nan)


def spectrum_table(
    gibbs: GibbsMeasure, q_min: float = -5.0, q_max: float = 5.0, step: float = 0.25
) -> SpectrumTable:
    if not step > 0 or not q_max > q_min:
        raise BadInput("need q_min < q_max and step > 0")
    n = int(round((q_max - q_min) / step))
    q = np.round(q_min + step * np.arange(n + 1), 12)
    T = np.array([spectrum_T(gibbs, float(v)) for v in q])
    second = np.diff(T, 2)
    flag = bool(second.size == 0 or np.max(np.abs(second)) < MAXIMAL_DIMENSION_TOL)
    t2 = spectrum_second_derivative(gibbs, 1.0)
    return SpectrumTable(q, T, dimension(gibbs), t2, flag)
