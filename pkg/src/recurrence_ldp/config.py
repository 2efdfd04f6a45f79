"""Scenario files: an INI dialect with rationals written as ``p/q``.

Grammar (sections and keys; ``#`` starts a comment)::

    [map]
    breakpoints = 0 1/2 1              # full branches, or:
    branches =                         # one branch per line
        lo hi slope image_lo image_hi
    transition =                       # optional, one row per line
        1 1
    beta = 2                           # optional expansion constant

    [potential]
    log_weights = 1/4 3/4              # zeta_i = log w_i, or:
    values = -1.2 0.3                  # zeta_i given directly

    [spectrum]   q_min, q_max, q_step
    [rates]      epsilons, x_points, floor_epsilons
    [mc]         r_max, r_min, r_ratio, n_per_r, n_centers, n_inner,
                 cap_factor, phi_a
    [constants]  C, a0, d2, kappa      # a0 / d2 may be "auto"
    [run]        seed, output_dir, workers
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .dynamics import Branch, MarkovMapSpec, build_map, to_fraction
from .errors import ConfigError

AUTO = "auto"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    branches: tuple
    transition: tuple | None
    beta: Fraction | None
    potential_kind: str
    potential: tuple
    q_min: float = -5.0
    q_max: float = 5.0
    q_step: float = 0.25
    epsilons: tuple = (0.05, 0.1, 0.2, 0.3)
    floor_epsilons: tuple = ()
    x_points: int = 201
    r_max: Fraction = Fraction(1, 256)
    r_min: Fraction = Fraction(1, 4096)
    r_ratio: Fraction = Fraction(1, 2)
    n_per_r: int = 2000
    n_centers: int = 40
    n_inner: int = 400
    cap_factor: float = 10.0
    phi_a: tuple = (0.05, 0.1, 0.2)
    C: float = 1.0
    a0: object = AUTO
    d2: object = AUTO
    kappa: float = 0.9
    seed: int = 0
    output_dir: str = "out"
    workers: int = 1
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def map_spec(self) -> MarkovMapSpec:
        return MarkovMapSpec(
            tuple(Branch(*b) for b in self.branches), self.transition, self.beta
        )

    def radii(self) -> list:
        out, r = [], self.r_max
        while r >= self.r_min:
            out.append(r)
            r *= self.r_ratio
        return out

    def digest(self) -> str:
        # worker count and output location do not change results
        canon = replace(self, workers=1, output_dir="out")
        return hashlib.sha256(serialize(canon).encode()).hexdigest()[:16]


def _line_of(text: str, section: str, key: str | None):
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


class _Reader:
    def __init__(self, text: str, name: str):
        self.text = text
        self.name = name
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        self.cp.optionxform = str
        try:
            self.cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse scenario: {exc}", field="file") from exc

    def fail(self, section, key, msg, field_name=None):
        raise ConfigError(msg, field=field_name or f"{section}.{key}", line=_line_of(self.text, section, key))

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.cp.has_option(section, key):
            if default is None:
                line = _line_of(self.text, section, None)
                raise ConfigError("missing entry", field=f"{section}.{key}", line=line)
            return default
        return self.cp.get(section, key)

    def convert(self, section, key, fn, default=None, field_name=None):
        if not self.cp.has_option(section, key):
            return default
        value = self.cp.get(section, key)
        try:
            return fn(value)
        except (ValueError, ZeroDivisionError, TypeError) as exc:
            self.fail(section, key, f"bad value {value!r}: {exc}", field_name)


def _fracs(s):
    return tuple(to_fraction(t) for t in s.split())


def _floats(s):
    return tuple(float(t) for t in s.split())


def _rows(s):
    return [line.split() for line in s.strip().splitlines() if line.strip()]


def parse(text: str, name: str = "scenario") -> ScenarioConfig:
    rd = _Reader(text, name)
    if not rd.cp.has_section("map"):
        raise ConfigError("missing [map] section", field="map")

    if rd.has("map", "branches"):
        rows = rd.convert("map", "branches", _rows)
        branches = []
        for row in rows:
            if len(row) != 5:
                rd.fail("map", "branches", f"branch needs 5 numbers, got {len(row)}")
            try:
                branches.append(tuple(to_fraction(v) for v in row))
            except (ValueError, ZeroDivisionError) as exc:
                rd.fail("map", "branches", f"bad rational in {row}: {exc}")
        branches = tuple(branches)
    elif rd.has("map", "breakpoints"):
        pts = rd.convert("map", "breakpoints", _fracs)
        if len(pts) < 3:
            rd.fail("map", "breakpoints", "need at least two branches")
        spec = MarkovMapSpec.full_branches(pts)
        branches = tuple((b.lo, b.hi, b.slope, b.image_lo, b.image_hi) for b in spec.branches)
    else:
        raise ConfigError("need branches or breakpoints", field="map.branches",
                          line=_line_of(text, "map", None))

    transition = None
    if rd.has("map", "transition"):
        rows = rd.convert("map", "transition", _rows)
        try:
            transition = tuple(tuple(int(v) for v in row) for row in rows)
        except ValueError:
            rd.fail("map", "transition", "entries must be 0 or 1")
    beta = rd.convert("map", "beta", to_fraction)

    if rd.has("potential", "log_weights"):
        kind, pot = "log_weights", rd.convert("potential", "log_weights", _fracs)
        if any(w <= 0 for w in pot):
            rd.fail("potential", "log_weights", "weights must be positive")
    elif rd.has("potential", "values"):
        kind, pot = "values", rd.convert("potential", "values", _floats)
    else:
        raise ConfigError("need log_weights or values", field="potential",
                          line=_line_of(text, "potential", None))
    if len(pot) != len(branches):
        raise ConfigError(f"{len(pot)} potential values for {len(branches)} branches",
                          field="potential", line=_line_of(text, "potential", kind))

    d = ScenarioConfig.__dataclass_fields__

    def get(section, key, fn, attr=None, field_name=None):
        attr = attr or key
        return rd.convert(section, key, fn, d[attr].default, field_name)

    def auto_or_float(s):
        return AUTO if s.strip().lower() == AUTO else float(s)

    cfg = ScenarioConfig(
        name=name,
        branches=branches,
        transition=transition,
        beta=beta,
        potential_kind=kind,
        potential=pot,
        q_min=get("spectrum", "q_min", float, field_name="q_grid"),
        q_max=get("spectrum", "q_max", float, field_name="q_grid"),
        q_step=get("spectrum", "q_step", float, field_name="q_grid"),
        epsilons=get("rates", "epsilons", _floats),
        floor_epsilons=get("rates", "floor_epsilons", _floats),
        x_points=get("rates", "x_points", int),
        r_max=get("mc", "r_max", to_fraction, field_name="r_grid"),
        r_min=get("mc", "r_min", to_fraction, field_name="r_grid"),
        r_ratio=get("mc", "r_ratio", to_fraction, field_name="r_grid"),
        n_per_r=get("mc", "n_per_r", int, field_name="samples"),
        n_centers=get("mc", "n_centers", int, field_name="samples"),
        n_inner=get("mc", "n_inner", int, field_name="samples"),
        cap_factor=get("mc", "cap_factor", float),
        phi_a=get("mc", "phi_a", _floats),
        C=get("constants", "C", float),
        a0=get("constants", "a0", auto_or_float),
        d2=get("constants", "d2", auto_or_float),
        kappa=get("constants", "kappa", float),
        seed=rd.convert("run", "seed", int, None, "master_seed"),
        output_dir=get("run", "output_dir", str),
        workers=get("run", "workers", int),
    )
    if cfg.seed is None:
        raise ConfigError("a master seed is required", field="master_seed",
                          line=_line_of(text, "run", None))
    validate(cfg, text)
    check_map(cfg, text)
    return cfg


def validate(cfg: ScenarioConfig, text: str = "") -> None:
    def err(msg, field_name, section=None, key=None):
        line = _line_of(text, section, key) if text and section else None
        raise ConfigError(msg, field=field_name, line=line)

    if not 0 < cfg.r_min < cfg.r_max < 1:
        err("need 0 < r_min < r_max < 1", "r_grid", "mc", "r_min")
    if not 0 < cfg.r_ratio < 1:
        err("r_ratio must lie in (0, 1)", "r_grid", "mc", "r_ratio")
    if not cfg.q_step > 0 or not cfg.q_min < cfg.q_max:
        err("need q_step > 0 and q_min < q_max", "q_grid", "spectrum", "q_step")
    for key in ("n_per_r", "n_centers", "n_inner"):
        if getattr(cfg, key) < 1:
            err(f"{key} must be at least 1", "samples", "mc", key)
    if cfg.workers < 1:
        err("workers must be at least 1", "workers", "run", "workers")
    if cfg.x_points < 2:
        err("x_points must be at least 2", "x_points", "rates", "x_points")
    if any(e < 0 for e in cfg.epsilons + cfg.floor_epsilons):
        err("epsilons must be nonnegative", "epsilons", "rates", "epsilons")
    if not 0 < cfg.kappa < 1:
        err("kappa must lie in (0, 1)", "kappa", "constants", "kappa")
    for key in ("a0", "d2"):
        v = getattr(cfg, key)
        if v != AUTO and not v > 0:
            err(f"{key} must be positive or auto", key, "constants", key)
    if cfg.cap_factor < 1:
        err("cap_factor must be at least 1", "cap_factor", "mc", "cap_factor")


def load(path) -> ScenarioConfig:
    from pathlib import Path

    p = Path(path)
    return parse(p.read_text(), name=p.stem)


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _join(values) -> str:
    return " ".join(_fmt(v) for v in values)


def serialize(cfg: ScenarioConfig) -> str:
    lines = ["[map]", "branches ="]
    lines += ["    " + _join(b) for b in cfg.branches]
    if cfg.transition is not None:
        lines.append("transition =")
        lines += ["    " + _join(row) for row in cfg.transition]
    if cfg.beta is not None:
        lines.append(f"beta = {_fmt(cfg.beta)}")
    lines += ["", "[potential]", f"{cfg.potential_kind} = {_join(cfg.potential)}"]
    lines += [
        "",
        "[spectrum]",
        f"q_min = {_fmt(cfg.q_min)}",
        f"q_max = {_fmt(cfg.q_max)}",
        f"q_step = {_fmt(cfg.q_step)}",
        "",
        "[rates]",
        f"epsilons = {_join(cfg.epsilons)}",
        f"floor_epsilons = {_join(cfg.floor_epsilons)}",
        f"x_points = {cfg.x_points}",
        "",
        "[mc]",
        f"r_max = {_fmt(cfg.r_max)}",
        f"r_min = {_fmt(cfg.r_min)}",
        f"r_ratio = {_fmt(cfg.r_ratio)}",
        f"n_per_r = {cfg.n_per_r}",
        f"n_centers = {cfg.n_centers}",
        f"n_inner = {cfg.n_inner}",
        f"cap_factor = {_fmt(cfg.cap_factor)}",
        f"phi_a = {_join(cfg.phi_a)}",
        "",
        "[constants]",
        f"C = {_fmt(cfg.C)}",
        f"a0 = {_fmt(cfg.a0)}",
        f"d2 = {_fmt(cfg.d2)}",
        f"kappa = {_fmt(cfg.kappa)}",
        "",
        "[run]",
        f"seed = {cfg.seed}",
        f"output_dir = {cfg.output_dir}",
        f"workers = {cfg.workers}",
        "",
    ]
    return "\n".join(lines)


def check_map(cfg: ScenarioConfig, text: str = ""):
    """Build the map, re-raising validation failures with the offending field."""
    from .errors import MapError

    try:
        return build_map(cfg.map_spec())
    except MapError as exc:
        key = "branches" if text and _line_of(text, "map", "branches") else "breakpoints"
        line = _line_of(text, "map", key) if text else None
        raise ConfigError(f"{type(exc).__name__}: {exc}", field="map.branches", line=line) from exc
