"""Measures of intervals and balls under a Gibbs measure, with enclosures.

An interval ``[u, v]`` is resolved by descending the cylinder tree along the
two endpoints. Cylinders strictly between the endpoint paths are counted
with their exact Markov mass; the two cylinders still containing ``u`` and
``v`` when the descent stops are the only uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dynamics import SymbolicPoint, cylinder, extend_point, to_fraction
from .errors import BadInterval, DepthOverflow, ZeroMeasure
from .thermo import GibbsMeasure, dimension

MAX_LEVELS = 20_000


@dataclass(frozen=True)
class MeasureQueryResult:
    value: float
    error_bound: float
    nodes_visited: int

    @property
    def lower(self) -> float:
        return max(self.value - self.error_bound, 0.0)

    @property
    def upper(self) -> float:
        return min(self.value + self.error_bound, 1.0)


@dataclass
class _Path:
    """One endpoint's descent: current node and its local coordinate."""

    point: Fraction          # g^(len(word)-1) of the endpoint, inside D_word[-1]
    word: list
    mass: float
    left_closed: bool        # True: endpoint is u (right-continuous lookup)
    done: bool = False
    pieces: list = field(default_factory=list)

    def sym(self):
        return self.word[-1]


def _child_symbol(mp, y, left_closed):
    return mp.branch_of(y) if left_closed else mp.branch_of_left(y)


def _start(mp, x, left_closed, pi):
    k = _child_symbol(mp, x, left_closed)
    return _Path(x, [k], float(pi[k]), left_closed)


def _children(mp, j):
    return np.flatnonzero(mp.transition[j])


def _exact_edge(mp, path) -> bool:
    # u sitting on the left end (or v on the right end) of its node means the
    # whole node lies inside the interval
    b = mp.branches[path.sym()]
    return path.point == (b.lo if path.left_closed else b.hi)


def _step(mp, Q, path, collect):
    """Descend one level; return the mass of siblings that fall inside."""
    j = path.sym()
    y = mp.branches[j].forward(path.point)
    k = _child_symbol(mp, y, path.left_closed)
    kids = _children(mp, j)
    inside = 0.0
    for c in kids:
        if (c > k) if path.left_closed else (c < k):
            w = path.mass * Q[j, c]
            inside += w
            if collect:
                path.pieces.append((tuple(path.word) + (int(c),), w))
    path.word.append(int(k))
    path.mass *= Q[j, k]
    path.point = y
    return inside


def _descend(gibbs: GibbsMeasure, u: Fraction, v: Fraction, tol, rtol, collect):
    mp = gibbs.map
    Q = gibbs.stochastic
    pi = gibbs.stationary
    nodes = 1
    pieces = []
    inner = 0.0

    pu = _start(mp, u, True, pi)
    pv = _start(mp, v, False, pi)
    # joint phase: both endpoints in the same node
    levels = 0
    while pu.word == pv.word:
        if _exact_edge(mp, pu) and _exact_edge(mp, pv):
            inner = pu.mass
            if collect:
                pieces.append((tuple(pu.word), pu.mass))
            return inner, 0.0, nodes, pieces, None
        j = pu.sym()
        yu = mp.branches[j].forward(pu.point)
        yv = mp.branches[j].forward(pv.point)
        ku = _child_symbol(mp, yu, True)
        kv = _child_symbol(mp, yv, False)
        nodes += 1
        levels += 1
        if levels > MAX_LEVELS:
            raise DepthOverflow("interval descent did not separate the endpoints")
        if ku != kv:
            base = tuple(pu.word)
            for c in _children(mp, j):
                if ku < c < kv:
                    w = pu.mass * Q[j, c]
                    inner += w
                    if collect:
                        pieces.append((base + (int(c),), w))
            mass = pu.mass
            pu.word.append(int(ku))
            pv.word.append(int(kv))
            pu.mass = mass * Q[j, ku]
            pv.mass = mass * Q[j, kv]
            pu.point, pv.point = yu, yv
            break
        pu.word.append(int(ku))
        pv.word.append(int(kv))
        pu.mass *= Q[j, ku]
        pv.mass *= Q[j, kv]
        pu.point, pv.point = yu, yv
    else:
        # endpoints in different branches from the start
        for c in range(mp.m):
            if pu.sym() < c < pv.sym():
                inner += float(pi[c])
                if collect:
                    pieces.append(((c,), float(pi[c])))

    def settle(path):
        nonlocal inner
        if not path.done and _exact_edge(mp, path):
            inner += path.mass
            if collect:
                path.pieces.append((tuple(path.word), path.mass))
            path.mass = 0.0
            path.done = True

    settle(pu)
    settle(pv)
    while True:
        eb = 0.5 * (pu.mass + pv.mass)
        target = tol if tol is not None else 0.0
        if rtol is not None:
            target = max(target, rtol * inner)
        if eb <= target or (pu.done and pv.done):
            break
        path = pu if pu.mass >= pv.mass else pv
        if path.done:
            path = pv if path is pu else pu
        inner += _step(mp, Q, path, collect)
        nodes += 1
        if len(path.word) > MAX_LEVELS:
            raise DepthOverflow("interval descent exceeded the depth limit")
        settle(path)
    pieces.extend(pu.pieces)
    pieces.extend(pv.pieces)
    return inner, 0.5 * (pu.mass + pv.mass), nodes, pieces, (pu, pv)


def measure_interval(gibbs: GibbsMeasure, u, v, tol=1e-12, rtol=None) -> MeasureQueryResult:
    """mu([u, v]) as an enclosure ``value +- error_bound`` with error_bound <= tol.

    With ``rtol`` the stopping rule is relative to the mass found so far.
    """
    u, v = to_fraction(u), to_fraction(v)
    if not 0 <= u <= v <= 1:
        raise BadInterval(f"need 0 <= u <= v <= 1, got [{u}, {v}]")
    if (tol is None or tol <= 0) and (rtol is None or rtol <= 0):
        raise BadInterval("a positive tol or rtol is required")
    if u == v:
        return MeasureQueryResult(0.0, 0.0, 0)
    inner, eb, nodes, _, _ = _descend(gibbs, u, v, tol, rtol, False)
    return MeasureQueryResult(float(min(inner + eb, 1.0)), float(eb), nodes)


def ball_interval(x, r) -> tuple[Fraction, Fraction]:
    x, r = to_fraction(x), to_fraction(r)
    return max(Fraction(0), x - r), min(Fraction(1), x + r)


def ball_measure(gibbs: GibbsMeasure, x, r, tol=1e-12, rtol=None) -> MeasureQueryResult:
    """mu(B(x, r)) with the ball clipped to [0, 1]."""
    if to_fraction(r) <= 0:
        raise BadInterval("radius must be positive")
    u, v = ball_interval(x, r)
    return measure_interval(gibbs, u, v, tol=tol, rtol=rtol)


def local_dim_ratio(gibbs: GibbsMeasure, x, r) -> float:
    """log mu(B(x, r)) / log r."""
    if not 0 < float(r) < 1:
        raise BadInterval("radius must lie in (0, 1)")
    res = ball_measure(gibbs, x, r, tol=None, rtol=1e-9)
    if res.value <= 0:
        raise ZeroMeasure(f"ball around {x} has zero measure")
    return math.log(res.value) / math.log(float(r))


def classify_level_set(gibbs: GibbsMeasure, x, r, kind: str, eps: float, d_mu=None):
    """Membership in A_eps(r) = {mu(B) >= r^(d+eps)} or A_minus_xi(r) = {mu(B) <= r^(d-xi)}.

    Returns True, False, or None when the enclosure still straddles the
    threshold after one tightening.
    """
    d = dimension(gibbs) if d_mu is None else d_mu
    r_f = float(r)
    if kind == "A_eps":
        thr = r_f ** (d + eps)
    elif kind == "A_minus_xi":
        thr = r_f ** (d - eps)
    else:
        raise ValueError(f"unknown level set {kind!r}")
    for rel in (1e-6, 1e-9):
        res = ball_measure(gibbs, x, r, tol=thr * rel)
        if res.lower >= thr:
            return kind == "A_eps"
        if res.upper < thr or (res.upper <= thr and kind == "A_minus_xi"):
            return kind == "A_minus_xi"
    return None


@dataclass(frozen=True)
class IntervalPieces:
    """Disjoint cylinders covering [u, v]; the ``straddle`` ones poke out of it."""

    u: Fraction
    v: Fraction
    words: tuple
    masses: np.ndarray
    straddle: np.ndarray

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def inner(self) -> float:
        return float(self.masses[~self.straddle].sum())


def interval_pieces(gibbs: GibbsMeasure, u, v, rtol: float = 1e-3) -> IntervalPieces:
    u, v = to_fraction(u), to_fraction(v)
    if not 0 <= u < v <= 1:
        raise BadInterval(f"need 0 <= u < v <= 1, got [{u}, {v}]")
    inner, eb, _, pieces, paths = _descend(gibbs, u, v, None, rtol, True)
    words = [w for w, _ in pieces]
    masses = [m for _, m in pieces]
    straddle = [False] * len(pieces)
    if paths is not None:
        for p in paths:
            if not p.done and p.mass > 0:
                words.append(tuple(p.word))
                masses.append(p.mass)
                straddle.append(True)
    if not masses or sum(masses) <= 0:
        raise ZeroMeasure("interval carries no mass")
    return IntervalPieces(u, v, tuple(words), np.array(masses), np.array(straddle, dtype=bool))


def _inside(mp, word, u, v):
    lo, hi = cylinder(mp, word)
    if lo >= u and hi <= v:
        return True
    if hi <= u or lo > v:
        return False
    return None


def conditional_sample(
    gibbs: GibbsMeasure, u, v, rng: np.random.Generator, depth: int, pieces=None
) -> SymbolicPoint:
    """Draw a word from mu conditioned on [u, v].

    Cylinders contained in the interval are chosen with their exact mass;
    the two boundary cylinders are chosen with their full mass and the draw
    is kept only if the continued word lands inside the interval.
    """
    mp = gibbs.map
    if pieces is None:
        pieces = interval_pieces(gibbs, u, v)
    cum = np.cumsum(pieces.masses)
    cum /= cum[-1]
    u, v = pieces.u, pieces.v
    for _ in range(100_000):
        i = int(min(np.searchsorted(cum, rng.random(), side="right"), len(cum) - 1))
        word = pieces.words[i]
        p = extend_point(gibbs, SymbolicPoint(word), rng, max(depth - len(word), 0))
        if not pieces.straddle[i]:
            return p
        verdict = _inside(mp, p.word, u, v)
        while verdict is None:
            p = extend_point(gibbs, p, rng, 16)
            verdict = _inside(mp, p.word, u, v)
        if verdict:
            return p
    raise ZeroMeasure("rejection sampling made no progress")
