"""Command line entry point and scenario orchestration."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import AUTO, ScenarioConfig, check_map, load
from .errors import ConfigError, InvalidEstimate, RecurrenceError
from .mc_lab import empirical_tail, fast_return_constants, phi_rate_estimate
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
from .thermo import (
    Potential,
    curvature,
    gibbs_measure,
    moran_T,
    spectrum_table,
)

SIG = 12


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "fail"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{SIG}g}"


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


@dataclass
class Verdict:
    name: str
    passed: bool
    lhs: float
    rhs: float
    relation: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {fmt(self.lhs)} {self.relation} {fmt(self.rhs)}"


@dataclass
class RunReport:
    config: ScenarioConfig
    spectrum: object
    profile: object
    lambda_rows: list
    rate_rows: list
    tails: list
    fits: list
    verdicts: list
    provenance: dict
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v.passed for v in self.verdicts)


class StageError(RecurrenceError):
    def __init__(self, stage, exc):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {type(exc).__name__}: {exc}")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except RecurrenceError as exc:
        raise StageError(name, exc) from exc


def build_gibbs(cfg: ScenarioConfig):
    mp = check_map(cfg)
    if cfg.potential_kind == "log_weights":
        pot = Potential.from_weights([float(w) for w in cfg.potential])
    else:
        pot = Potential(np.array(cfg.potential, dtype=float))
    return mp, _stage("thermo", gibbs_measure, mp, pot)


def lambda_grid(profile, points: int) -> np.ndarray:
    lo, hi = profile.support
    pad = max(0.1 * (hi - lo), 0.1)
    xs = np.linspace(lo - pad, hi + pad, points)
    anchors = np.array(sorted({lo, hi, -profile.d_mu}))
    xs = xs[np.min(np.abs(xs[:, None] - anchors), axis=1) > 1e-9]
    return np.sort(np.concatenate([xs, anchors]))


def emit_lambda_curve(profile, x_grid, path: Path):
    rows = [(x, lambda_star(profile, x)) for x in x_grid]
    _write_csv(path, ["x", "lambda_star"], rows)
    return rows


RATE_HEADER = [
    "eps", "psi_plus", "psi_minus", "g1", "g2", "quadratic_floor_g1", "quadratic_floor_g2",
    "empirical_slope_ge", "empirical_slope_le", "verdict_ge", "verdict_le",
]


def emit_rate_comparison(report: RunReport, path: Path):
    rows = [[r[k] for k in RATE_HEADER] for r in report.rate_rows]
    _write_csv(path, RATE_HEADER, rows)
    return rows


def _resolve_constants(cfg, gibbs, profile):
    a0, d2 = cfg.a0, cfg.d2
    if a0 == AUTO or d2 == AUTO:
        frc = fast_return_constants(gibbs, profile)
        a0 = frc.a0 if a0 == AUTO else a0
        d2 = frc.d2 if d2 == AUTO else d2
    if not (a0 > 0 and d2 > 0):
        raise ConfigError(f"surrogate constants a0={a0}, d2={d2} not positive; set them",
                          field="constants")
    return float(a0), float(d2)


def theory(cfg: ScenarioConfig):
    """Spectrum, rate profile and the verdicts that need no simulation."""
    mp, gibbs = build_gibbs(cfg)
    table = _stage("thermo", spectrum_table, gibbs, cfg.q_min, cfg.q_max, cfg.q_step)
    profile = _stage("rates", rate_profile, gibbs)
    curv = _stage("thermo", curvature, gibbs)
    verdicts = []
    q, T = table.q_grid, table.T_values
    from .thermo import spectrum_T

    t1, t0 = spectrum_T(gibbs, 1.0), spectrum_T(gibbs, 0.0)
    verdicts.append(Verdict("T(1) = 0", abs(t1) <= 1e-10, abs(t1), 1e-10, "<="))
    verdicts.append(Verdict("T(0) = dim J = 1", abs(t0 - 1) <= 1e-8, abs(t0 - 1), 1e-8, "<="))
    d1, d2_ = np.diff(T), np.diff(T, 2)
    verdicts.append(Verdict("T nonincreasing", d1.max() <= 1e-8, d1.max(), 1e-8, "<="))
    verdicts.append(Verdict("T convex", d2_.min() >= -1e-8, d2_.min(), -1e-8, ">="))
    if gibbs.is_bernoulli:
        ratios = [float(1 / b.slope) for b in mp.branches]
        diff = float(np.max(np.abs(moran_T(gibbs.probabilities, ratios, q) - T)))
        verdicts.append(Verdict("spectrum matches Moran oracle", diff < 1e-8, diff, 1e-8, "<"))
    x_grid = lambda_grid(profile, cfg.x_points)
    ls = np.array([lambda_star(profile, x) for x in x_grid])
    at_min = lambda_star(profile, -profile.d_mu)
    verdicts.append(Verdict("Lambda*(-d) = 0", abs(at_min) <= 1e-6, abs(at_min), 1e-6, "<="))
    verdicts.append(Verdict("Lambda* >= 0", ls.min() >= -1e-9, ls.min(), -1e-9, ">="))
    if not profile.maximal:
        verdicts.append(Verdict("curvature routes agree", curv.discrepancy < 0.01,
                                curv.discrepancy, 0.01, "<"))
    return mp, gibbs, table, profile, curv, x_grid, verdicts


def run_scenario(cfg: ScenarioConfig, out_dir=None, seed=None, workers=None, simulate=True):
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    if workers is not None:
        cfg = replace(cfg, workers=int(workers))
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    mp, gibbs, table, profile, curv, x_grid, verdicts = theory(cfg)
    a0, d2 = _resolve_constants(cfg, gibbs, profile)
    c = curv.value
    radii = [float(r) for r in cfg.radii()]
    eps_list = list(cfg.epsilons)
    floors = set(cfg.floor_epsilons)

    tails, fits, notes = [], [], []
    empirical = {}
    phi_eps, phi_table = None, None
    if simulate:
        for i, eps in enumerate(eps_list):
            if eps <= 0:
                continue
            for sign, kind in ((1, "ge"), (-1, "le")):
                ests, fit = _stage("mc_lab", empirical_tail, gibbs, sign * eps, radii,
                                   cfg.n_per_r, cfg.cap_factor, cfg.seed + 1000 * i, cfg.workers,
                                   profile.d_mu)
                tails += [(eps, e) for e in ests]
                fits.append((f"tau_{kind}", eps, float("nan"), fit))
                empirical[(eps, kind)] = fit
        phi_eps = max((e for e in eps_list if e > 0), default=None)
        if phi_eps is not None:
            phi_table = {}
            for j, a in enumerate(cfg.phi_a):
                try:
                    fit = phi_rate_estimate(gibbs, a, phi_eps, cfg.C, radii[:3], cfg.n_centers,
                                            cfg.n_inner, cfg.seed + 7919 * (j + 1), cfg.workers,
                                            profile.d_mu)
                except InvalidEstimate:
                    # too many undecided centers at every radius
                    notes.append(f"phi(a={fmt(a)}) not estimable; theoretical phi used")
                    phi_table = None
                    break
                except RecurrenceError as exc:
                    raise StageError("mc_lab", exc) from exc
                fits.append(("phi", phi_eps, a, fit))
                phi_table[a] = max(fit.slope, 0.0)

    rate_rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonPositiveBound)
        for eps in eps_list:
            pp, pm = psi_rate(profile, eps), psi_rate(profile, -eps)
            v1 = g1(profile, eps)
            v2 = g2(profile, eps, a0, d2).value if eps > 0 else 0.0
            f1, f2 = quadratic_floor(c, eps, cfg.kappa)
            row = dict(eps=eps, psi_plus=pp, psi_minus=pm, g1=v1, g2=v2,
                       quadratic_floor_g1=f1, quadratic_floor_g2=f2,
                       empirical_slope_ge=float("nan"), empirical_slope_le=float("nan"),
                       verdict_ge="n/a", verdict_le="n/a")
            if (eps, "ge") in empirical:
                s_ge = empirical[(eps, "ge")].slope
                s_le = empirical[(eps, "le")].slope
                if eps == phi_eps and phi_table:
                    phi = step_phi(phi_table)
                else:
                    phi = phi_from_theory(profile, eps, a0, d2)
                b4 = theorem25_lower_bounds(lambda t: psi_rate(profile, t), phi, eps,
                                            a_range=(1e-9, eps), passes=8)[1]
                ok_ge, ok_le = s_ge >= v1 - 0.1, s_le >= b4 - 0.1
                row.update(empirical_slope_ge=s_ge, empirical_slope_le=s_le,
                           verdict_ge=ok_ge, verdict_le=ok_le)
                verdicts.append(Verdict(f"slow-return exponent eps={eps}", ok_ge, s_ge, v1 - 0.1, ">="))
                verdicts.append(Verdict(f"fast-return exponent eps={eps}", ok_le, s_le, b4 - 0.1, ">="))
            if eps in floors and not math.isinf(c):
                verdicts.append(Verdict(f"g1 quadratic floor eps={eps}", v1 >= f1, v1, f1, ">="))
                verdicts.append(Verdict(f"g2 quadratic floor eps={eps}", v2 >= f2, v2, f2, ">="))
            rate_rows.append(row)

    q = table.q_grid
    hp = table.hp()
    _write_csv(out / "spectrum.csv", ["q", "T", "hp"], zip(q, table.T_values, hp))
    lambda_rows = emit_lambda_curve(profile, x_grid, out / "lambda_curve.csv")
    _write_csv(
        out / "tails.csv",
        ["eps", "kind", "r", "threshold_exponent", "hits", "n", "p_hat", "ci_low", "ci_high",
         "censored", "undecided", "invalid"],
        [(eps, e.kind, e.r, e.threshold_exponent, e.hits, e.n, e.p_hat, e.ci_low, e.ci_high,
          e.censored, e.undecided, int(e.invalid)) for eps, e in tails],
    )
    _write_csv(
        out / "fits.csv",
        ["quantity", "eps", "a", "slope", "stderr", "n_points", "surrogate"],
        [(name, eps, a, f.slope, f.stderr, len(f.points), int(f.surrogate))
         for name, eps, a, f in fits],
    )
    provenance = {
        "scenario": cfg.name,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "version": __version__,
    }
    report = RunReport(cfg, table, profile, lambda_rows, rate_rows, tails, fits, verdicts,
                       provenance, notes)
    emit_rate_comparison(report, out / "rates.csv")
    (out / "report.txt").write_text(render_report(report, a0, d2, curv))
    return report


def render_report(report: RunReport, a0, d2, curv) -> str:
    t = report.spectrum
    p = report.profile
    lines = [
        f"scenario: {report.config.name}",
        f"d_mu: {fmt(t.d_mu)}",
        f"T''(1): {fmt(t.T2_at_1)}",
        f"maximal_dimension: {str(t.maximal_dimension_flag).lower()}",
        f"support: [{fmt(p.support[0])}, {fmt(p.support[1])}]",
        f"lyapunov: {fmt(curv.lyapunov)}",
        f"variance: {fmt(curv.variance)}",
        f"curvature_spectrum: {fmt(curv.from_spectrum)}",
        f"curvature_variance: {fmt(curv.from_variance)}",
        f"a0: {fmt(a0)}",
        f"d2: {fmt(d2)}",
        "",
        "verdicts:",
    ]
    lines += ["  " + v.line() for v in report.verdicts]
    if report.notes:
        lines += ["", "notes:"] + ["  " + n for n in report.notes]
    lines += ["", f"overall: {'PASS' if report.ok else 'FAIL'}", "", "provenance:"]
    lines += [f"  {k}: {v}" for k, v in report.provenance.items()]
    return "\n".join(lines) + "\n"


def find_config(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("recurrence_ldp") / "scenarios" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    if not p.suffix:
        return find_config(name + ".cfg")
    raise FileNotFoundError(f"no scenario file {name!r}")


def _cmd_run(args):
    cfg = load(find_config(args.config))
    report = run_scenario(cfg, out_dir=args.out, seed=args.seed, workers=args.workers)
    for v in report.verdicts:
        print(v.line())
    print("overall:", "PASS" if report.ok else "FAIL")
    return 0 if report.ok else 1


def _cmd_spectrum(args):
    cfg = load(find_config(args.config))
    _, gibbs = build_gibbs(cfg)
    table = spectrum_table(
        gibbs,
        cfg.q_min if args.q_min is None else args.q_min,
        cfg.q_max if args.q_max is None else args.q_max,
        cfg.q_step if args.step is None else args.step,
    )
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["q", "T", "hp"])
    for row in zip(table.q_grid, table.T_values, table.hp()):
        w.writerow([fmt(v) for v in row])
    return 0


def _cmd_lambda(args):
    cfg = load(find_config(args.config))
    _, gibbs = build_gibbs(cfg)
    profile = rate_profile(gibbs)
    if args.x_min is None or args.x_max is None:
        xs = lambda_grid(profile, args.points)
    else:
        xs = np.linspace(args.x_min, args.x_max, args.points)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["x", "lambda_star"])
    for x in xs:
        w.writerow([fmt(x), fmt(lambda_star(profile, x))])
    return 0


def _cmd_verify(args):
    from .acceptance import CRITERIA, run_criteria

    cfg = load(find_config(args.config))
    ok = True
    *_, verdicts = theory(cfg)
    for v in verdicts:
        print(v.line())
        ok &= v.passed
    ids = [int(s) for s in args.criteria.split(",")] if args.criteria else sorted(CRITERIA)
    for res in run_criteria(ids):
        print(res.line())
        ok &= res.passed
    print("overall:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recurrence-ldp",
                                 description="Return-time large deviations on Markov interval maps")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write CSV outputs")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("spectrum", help="print T(q) on a grid")
    p.add_argument("config")
    p.add_argument("--q-min", type=float)
    p.add_argument("--q-max", type=float)
    p.add_argument("--step", type=float)
    p.set_defaults(fn=_cmd_spectrum)

    p = sub.add_parser("lambda-curve", help="print the rate function Lambda*")
    p.add_argument("config")
    p.add_argument("--x-min", type=float)
    p.add_argument("--x-max", type=float)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(fn=_cmd_lambda)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("config")
    p.add_argument("--criteria", help="comma-separated criterion numbers")
    p.set_defaults(fn=_cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RecurrenceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
