"""Piecewise-linear expanding Markov maps of [0, 1] and their symbolic coding.

Every branch ``i`` is an increasing affine bijection from its domain
``[u_i, v_i)`` onto an image interval ``[c_i, d_i)`` that is a union of
branch domains. Endpoints and slopes are exact rationals, and all orbit
questions are answered from the itinerary (contracting inverse branches),
never by iterating the expanding map in floating point.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    BadPartition,
    DepthOverflow,
    Inadmissible,
    InsufficientDepth,
    NotExpanding,
    NotMarkov,
    NotPrimitive,
)

MAX_DEPTH = 100_000


def to_fraction(value) -> Fraction:
    """Exact rational from ``"p/q"`` strings, ints, Fractions or floats.

    Floats are converted exactly (their binary value), not rounded to a
    nearby simple fraction.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


@dataclass(frozen=True)
class Branch:
    lo: Fraction
    hi: Fraction
    slope: Fraction
    image_lo: Fraction
    image_hi: Fraction

    @classmethod
    def make(cls, lo, hi, slope, image_lo, image_hi) -> "Branch":
        return cls(*(to_fraction(v) for v in (lo, hi, slope, image_lo, image_hi)))

    def forward(self, x: Fraction) -> Fraction:
        return self.image_lo + self.slope * (x - self.lo)

    def inverse(self, y: Fraction) -> Fraction:
        return self.lo + (y - self.image_lo) / self.slope


@dataclass(frozen=True)
class MarkovMapSpec:
    branches: tuple
    transition: tuple | None = None
    beta: Fraction | None = None

    @classmethod
    def full_branches(cls, breakpoints: Sequence) -> "MarkovMapSpec":
        """Map whose branches all map onto [0, 1); ``breakpoints`` = 0 < ... < 1."""
        pts = [to_fraction(b) for b in breakpoints]
        branches = tuple(
            Branch(lo, hi, 1 / (hi - lo), Fraction(0), Fraction(1))
            for lo, hi in zip(pts[:-1], pts[1:])
        )
        return cls(branches)


@dataclass(frozen=True)
class SymbolicPoint:
    """A point known through a finite admissible itinerary."""

    word: tuple

    @property
    def depth(self) -> int:
        return len(self.word)

    def shifted(self, k: int = 1) -> "SymbolicPoint":
        return SymbolicPoint(self.word[k:])


class MarkovMap:
    """Validated map; build it with :func:`build_map`."""

    def __init__(self, spec: MarkovMapSpec, transition: np.ndarray, beta: Fraction):
        self.spec = spec
        self.branches = spec.branches
        self.m = len(spec.branches)
        self.transition = transition
        self.beta = beta
        self.degree = int(transition.sum(axis=1).max())
        self._lows = [b.lo for b in self.branches]
        self._highs = [b.hi for b in self.branches]

        self.lo_f = np.array([float(b.lo) for b in self.branches])
        self.hi_f = np.array([float(b.hi) for b in self.branches])
        self.log_slopes = np.array([math.log(b.slope) for b in self.branches])
        # inverse branch h_i(y) = alpha_i + scale_i * y
        self.alpha_f = np.array(
            [float(b.lo - b.image_lo / b.slope) for b in self.branches]
        )
        self.scale_f = np.array([float(1 / b.slope) for b in self.branches])
        self.mid_f = 0.5 * (self.lo_f + self.hi_f)
        beta_f = float(beta)
        self.lookahead = int(math.ceil(50 * math.log(2) / math.log(beta_f)))
        # rounding in the backward recurrence contracts geometrically
        self.position_slack = (
            64 * np.finfo(float).eps * beta_f / (beta_f - 1) + 0.5 * beta_f ** -self.lookahead
        )

    def __repr__(self):
        return f"MarkovMap(m={self.m}, beta={self.beta})"

    def width_bound(self, n: int) -> Fraction:
        return self.beta ** -n

    def branch_of(self, x: Fraction) -> int:
        """Index of the branch whose half-open domain contains ``x`` (1 -> last)."""
        if x < 0 or x > 1:
            raise ValueError(f"point {x} outside [0, 1]")
        return min(bisect_right(self._lows, x) - 1, self.m - 1)

    def branch_of_left(self, x: Fraction) -> int:
        """Branch ``j`` with ``u_j < x <= v_j`` (left-continuous lookup)."""
        if x <= 0:
            return 0
        return min(bisect_left(self._highs, x), self.m - 1)

    def is_admissible(self, word: Sequence[int]) -> bool:
        if any(not 0 <= s < self.m for s in word):
            return False
        return all(self.transition[a, b] for a, b in zip(word[:-1], word[1:]))


def build_map(spec: MarkovMapSpec) -> MarkovMap:
    branches = tuple(
        b if isinstance(b, Branch) else Branch.make(*b) for b in spec.branches
    )
    spec = MarkovMapSpec(branches, spec.transition, spec.beta)
    m = len(branches)
    if m == 0:
        raise BadPartition("no branches")

    if branches[0].lo != 0 or branches[-1].hi != 1:
        raise BadPartition("branch domains must start at 0 and end at 1")
    for b in branches:
        if not b.lo < b.hi:
            raise BadPartition(f"empty branch [{b.lo}, {b.hi})")
    for a, b in zip(branches[:-1], branches[1:]):
        if a.hi != b.lo:
            kind = "gap" if a.hi < b.lo else "overlap"
            raise BadPartition(f"{kind} between {a.hi} and {b.lo}")

    slopes = [b.slope for b in branches]
    if min(slopes) <= 1:
        raise NotExpanding(f"slopes must exceed 1, got min {min(slopes)}")
    beta = min(slopes) if spec.beta is None else to_fraction(spec.beta)
    if beta <= 1 or any(s < beta for s in slopes):
        raise NotExpanding(f"declared beta {beta} not a valid expansion bound")

    points = {b.lo for b in branches} | {Fraction(1)}
    derived = np.zeros((m, m), dtype=np.int64)
    for i, b in enumerate(branches):
        if b.slope * (b.hi - b.lo) != b.image_hi - b.image_lo:
            raise NotMarkov(f"branch {i}: slope * width != image width")
        if b.image_lo not in points or b.image_hi not in points:
            raise NotMarkov(f"branch {i}: image [{b.image_lo}, {b.image_hi}) not aligned")
        for j, c in enumerate(branches):
            if b.image_lo <= c.lo and c.hi <= b.image_hi:
                derived[i, j] = 1

    if spec.transition is not None:
        given = np.asarray(spec.transition, dtype=np.int64)
        if given.shape != (m, m) or not np.array_equal(given, derived):
            raise NotMarkov("transition matrix disagrees with branch images")

    if not _is_primitive(derived):
        raise NotPrimitive("transition matrix is reducible or periodic")
    return MarkovMap(spec, derived, beta)


def _is_primitive(a: np.ndarray) -> bool:
    m = a.shape[0]
    power = (a > 0).astype(np.int64)
    base = power.copy()
    for _ in range(m * m):
        if power.all():
            return True
        power = ((power @ base) > 0).astype(np.int64)
    return bool(power.all())


def encode(mp: MarkovMap, x, n: int, max_depth: int = MAX_DEPTH) -> SymbolicPoint:
    """Itinerary of ``x`` of length ``n`` by exact rational subdivision."""
    if n < 1:
        raise ValueError("depth must be >= 1")
    if n > max_depth:
        raise DepthOverflow(f"depth {n} exceeds maximum {max_depth}")
    y = to_fraction(x)
    word = []
    for _ in range(n):
        i = mp.branch_of(y)
        word.append(i)
        y = mp.branches[i].forward(y)
    return SymbolicPoint(tuple(word))


def cylinder(mp: MarkovMap, word: Sequence[int]) -> tuple[Fraction, Fraction]:
    """Half-open interval ``[lo, hi)`` of points whose itinerary starts with ``word``."""
    word = tuple(int(s) for s in word)
    if not word:
        return Fraction(0), Fraction(1)
    if not mp.is_admissible(word):
        raise Inadmissible(f"word {word} is not admissible")
    last = mp.branches[word[-1]]
    lo, hi = last.lo, last.hi
    for s in reversed(word[:-1]):
        b = mp.branches[s]
        lo, hi = b.inverse(lo), b.inverse(hi)
    return lo, hi


def point_of(mp: MarkovMap, word: Sequence[int]) -> Fraction:
    """Exact representative of a symbolic point: its cylinder's left endpoint."""
    return cylinder(mp, word)[0]


def orbit_distance(
    mp: MarkovMap, p: SymbolicPoint, k: int, tol=None
) -> tuple[Fraction, Fraction]:
    """Enclosure ``[lo, hi]`` of ``|g^k x - x|`` for x in the cylinder of ``p``."""
    if not 0 <= k < p.depth:
        raise InsufficientDepth(f"step {k} needs depth > {k}, have {p.depth}")
    a0, b0 = cylinder(mp, p.word)
    ak, bk = cylinder(mp, p.word[k:])
    lo = max(Fraction(0), ak - b0, a0 - bk)
    hi = max(bk - a0, b0 - ak)
    if tol is not None and hi - lo > to_fraction(tol):
        raise InsufficientDepth(f"enclosure width {float(hi - lo):.3g} exceeds {tol}")
    return lo, hi


def sample_point(gibbs, rng: np.random.Generator, depth: int) -> SymbolicPoint:
    """Word of length ``depth`` drawn from the stationary Markov chain of ``gibbs``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    u = rng.random(depth)
    first = _pick(gibbs.stationary, u[0])
    word = [first]
    cum = np.cumsum(gibbs.stochastic, axis=1)
    for t in range(1, depth):
        word.append(_pick_cum(cum[word[-1]], u[t]))
    return SymbolicPoint(tuple(word))


def extend_point(gibbs, p: SymbolicPoint, rng: np.random.Generator, extra: int) -> SymbolicPoint:
    """Continue the itinerary of ``p`` by ``extra`` symbols of the Markov chain."""
    if extra <= 0:
        return p
    u = rng.random(extra)
    cum = np.cumsum(gibbs.stochastic, axis=1)
    word = list(p.word)
    for t in range(extra):
        word.append(_pick_cum(cum[word[-1]], u[t]))
    return SymbolicPoint(tuple(word))


def _pick(weights, u) -> int:
    return _pick_cum(np.cumsum(weights), u)


def _pick_cum(cum, u) -> int:
    return int(min(np.searchsorted(cum, u, side="right"), len(cum) - 1))


def positions(mp: MarkovMap, words: np.ndarray) -> np.ndarray:
    """Float estimates of ``g^k x`` for every row of ``words``.

    ``words`` has shape (B, N); the result has shape (B, N - lookahead) and
    each entry is within ``mp.position_slack`` of the exact position of the
    corresponding cylinder point.
    """
    words = np.asarray(words)
    n = words.shape[1]
    L = mp.lookahead
    if n <= L:
        raise InsufficientDepth(f"need more than {L} symbols, have {n}")
    wt = np.ascontiguousarray(words.T)
    alpha = mp.alpha_f[wt]
    scale = mp.scale_f[wt]
    out = np.empty((n - L, words.shape[0]))
    x = mp.mid_f[wt[n - 1]]
    for t in range(n - 2, -1, -1):
        x = alpha[t] + scale[t] * x
        if t < n - L:
            out[t] = x
    return out.T
