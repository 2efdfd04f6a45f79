from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurrence_ldp.cli import find_config
from recurrence_ldp.config import load, parse, serialize
from recurrence_ldp.errors import ConfigError

SCENARIOS = ["i1_lebesgue", "i2_bernoulli_quarter", "i3_unequal_slopes", "golden_mean_markov"]


@pytest.mark.parametrize("name", SCENARIOS)
def test_round_trip(name):
    cfg = load(find_config(name))
    assert parse(serialize(cfg), name) == cfg


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 2**31),
    st.integers(1, 16),
    st.lists(st.floats(0.01, 0.5), min_size=1, max_size=5),
    st.fractions(min_value="1/100", max_value="99/100", max_denominator=100),
)
def test_round_trip_property(seed, workers, eps, ratio):
    cfg = load(find_config("i2_bernoulli_quarter"))
    cfg = replace(cfg, seed=seed, workers=workers, epsilons=tuple(eps), r_ratio=ratio)
    assert parse(serialize(cfg), cfg.name) == cfg


def _text():
    return find_config("i2_bernoulli_quarter").read_text()


def test_r_grid_error_names_field():
    with pytest.raises(ConfigError) as exc:
        parse(_text().replace("r_min = 1/4096", "r_min = 1/128"))
    assert exc.value.field == "r_grid"
    assert "r_grid" in str(exc.value) and exc.value.line is not None


def test_missing_seed():
    with pytest.raises(ConfigError) as exc:
        parse(_text().replace("seed = 42", ""))
    assert exc.value.field == "master_seed"


@pytest.mark.parametrize(
    "old,new,field",
    [
        ("n_per_r = 2000", "n_per_r = 0", "samples"),
        ("q_step = 0.25", "q_step = -1", "q_grid"),
        ("r_ratio = 1/2", "r_ratio = x/2", "r_grid"),
        ("breakpoints = 0 1/2 1", "breakpoints = 0 1/2 3/4 1", "potential"),
        ("breakpoints = 0 1/2 1", "branches =\n    0 1/2 1 0 1/2\n    1/2 1 2 0 1", "map.branches"),
    ],
)
def test_validation_errors(old, new, field):
    with pytest.raises(ConfigError) as exc:
        parse(_text().replace(old, new))
    assert exc.value.field == field


def test_digest_ignores_workers():
    cfg = load(find_config("i2_bernoulli_quarter"))
    assert cfg.digest() == replace(cfg, workers=8, output_dir="elsewhere").digest()
    assert cfg.digest() != replace(cfg, seed=1).digest()
