import csv
import filecmp
import math
from pathlib import Path

import pytest

from recurrence_ldp.cli import (
    RATE_HEADER,
    emit_lambda_curve,
    find_config,
    fmt,
    lambda_grid,
    main,
    run_scenario,
    theory,
)
from recurrence_ldp.config import load

SCENARIOS = ["i1_lebesgue", "i2_bernoulli_quarter", "i3_unequal_slopes", "golden_mean_markov"]
EXPECTED = Path(__file__).resolve().parents[1] / "src" / "recurrence_ldp" / "scenarios" / "expected"
FILES = ["spectrum.csv", "lambda_curve.csv", "rates.csv", "tails.csv", "fits.csv", "report.txt"]


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_fmt():
    assert fmt(math.inf) == "inf" and fmt(math.nan) == "nan"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(True) == "pass" and fmt(7) == "7"


def test_lambda_curve_i2(tmp_path, p2):
    rows = emit_lambda_curve(p2, lambda_grid(p2, 81), tmp_path / "l.csv")
    x_min, v_min = min(rows, key=lambda r: r[1])
    assert x_min == pytest.approx(-0.8113, abs=1e-4) and v_min == pytest.approx(0, abs=1e-12)
    text = (tmp_path / "l.csv").read_text()
    assert ",inf\n" in text
    assert all(math.isinf(v) for x, v in rows if x < -2 - 1e-9 or x > -0.415037499 + 1e-9)


def test_lambda_curve_i1(tmp_path, p1):
    rows = emit_lambda_curve(p1, lambda_grid(p1, 41), tmp_path / "l.csv")
    finite = [(x, v) for x, v in rows if math.isfinite(v)]
    assert len(finite) == 1
    assert finite[0][0] == pytest.approx(-1, abs=1e-9) and finite[0][1] == 0
    assert fmt(finite[0][0]) == "-1"


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    out = {}
    for name in SCENARIOS:
        d = tmp_path_factory.mktemp(name)
        report = run_scenario(load(find_config(name)), out_dir=d)
        out[name] = (d, report)
    return out


@pytest.mark.parametrize("name", SCENARIOS)
def test_snapshot(outputs, name):
    d, _ = outputs[name]
    match, mismatch, errors = filecmp.cmpfiles(d, EXPECTED / name, FILES, shallow=False)
    assert not mismatch and not errors


def test_i1_report(outputs):
    d, report = outputs["i1_lebesgue"]
    assert "maximal_dimension: true" in (d / "report.txt").read_text()
    assert any(r["lambda_star"] == "inf" for r in _rows(d / "lambda_curve.csv"))
    for row in _rows(d / "rates.csv"):
        assert float(row["g1"]) == float(row["eps"])


def test_rates_table(outputs):
    d, report = outputs["i2_bernoulli_quarter"]
    rows = _rows(d / "rates.csv")
    assert list(rows[0]) == RATE_HEADER
    zero = [r for r in rows if float(r["eps"]) == 0][0]
    for key in ("psi_plus", "psi_minus", "g1", "g2", "quadratic_floor_g1", "quadratic_floor_g2"):
        assert float(zero[key]) == 0
    for r in rows:
        if r["verdict_ge"] in ("pass", "fail"):
            ok = float(r["empirical_slope_ge"]) >= float(r["g1"]) - 0.1
            assert r["verdict_ge"] == ("pass" if ok else "fail")


def test_report_provenance_and_verdicts(outputs):
    d, report = outputs["i2_bernoulli_quarter"]
    text = (d / "report.txt").read_text()
    for key in ("config_sha256", "seed: 42", "version"):
        assert key in text
    for v in report.verdicts:
        assert v.line() in text


def test_exit_code_is_verdict_conjunction(outputs, tmp_path):
    _, report = outputs["i2_bernoulli_quarter"]
    code = main(["run", "i2_bernoulli_quarter", "--out", str(tmp_path)])
    assert code == (0 if report.ok else 1)


def test_theory_verdicts_pass_for_all_scenarios():
    for name in SCENARIOS:
        *_, verdicts = theory(load(find_config(name)))
        assert all(v.passed for v in verdicts), [v.line() for v in verdicts if not v.passed]


def test_spectrum_and_lambda_commands(capsys):
    assert main(["spectrum", "i2_bernoulli_quarter", "--q-min", "0", "--q-max", "2",
                 "--step", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "q,T,hp" and lines[1].startswith("0,1,")
    assert main(["lambda-curve", "i1_lebesgue", "--x-min", "-1.2", "--x-max", "-0.8",
                 "--points", "3"]) == 0
    assert capsys.readouterr().out.splitlines()[1:] == ["-1.2,inf", "-1,0", "-0.8,inf"]


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(find_config("i2_bernoulli_quarter").read_text().replace("r_min = 1/4096",
                                                                           "r_min = 1"))
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 2
    assert "r_grid" in capsys.readouterr().err
