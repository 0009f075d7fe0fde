from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parahom.errors import BudgetExceeded, ConfigError, DegenerateData
from parahom.harness import (CSV_COLUMNS, fit_slope, load_config, make_source, parse_config,
                             read_report, run_identity_check, run_rate_study)

SMALL = {
    "domain": {"lengths": [1.0], "T": 0.0625},
    "coefficient": {"name": "laminate_1d", "params": {"amplitude": 0.5}},
    "study": {"epsilons": [0.125, 0.0625, 0.03125]},
    "cell": {"n_space": 32},
}


def _cfg(**overrides):
    data = json.loads(json.dumps(SMALL))
    for section, table in overrides.items():
        data.setdefault(section, {}).update(table)
    return parse_config(data)


# ---------------------------------------------------------------- slope fit

@settings(max_examples=40, deadline=None)
@given(st.floats(0.25, 3.0), st.floats(-5, 5))
def test_fit_recovers_exact_power_law(p, log_c):
    eps = [2.0**-k for k in range(3, 8)]
    fit = fit_slope([(e, math.exp(log_c) * e**p) for e in eps])
    assert fit.slope == pytest.approx(p, abs=1e-10)
    assert fit.intercept == pytest.approx(log_c, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.residual <= 1e-10


@pytest.mark.parametrize("power", [1.0, 0.5])
def test_fit_of_reference_rates(power):
    fit = fit_slope([(e, e**power) for e in (1 / 8, 1 / 16, 1 / 32, 1 / 64)])
    assert fit.slope == pytest.approx(power, abs=1e-12)


@pytest.mark.parametrize("values", [(1.0, 0.0, 0.5), (1.0, 1e-15, 0.5), (1.0, float("nan"), 0.5)])
def test_degenerate_data(values):
    with pytest.raises(DegenerateData):
        fit_slope(zip((0.5, 0.25, 0.125), values))


def test_too_few_points():
    with pytest.raises(ValueError):
        fit_slope([(0.5, 1.0), (0.25, 0.5)])


# ---------------------------------------------------------------- config

def test_preset_configs_load():
    from conftest import CONFIGS
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(path)
        assert cfg.epsilons == tuple(sorted(cfg.epsilons, reverse=True))


def test_defaults():
    cfg = parse_config({"coefficient": {"name": "laminate_1d"}})
    assert cfg.epsilons == (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    assert cfg.policy.space == 16 and cfg.policy.time == 8 and cfg.policy.theta == 0.5
    assert 2 < cfg.delta_factor < 2.01
    assert cfg.record_timings is False


@pytest.mark.parametrize("data", [
    {},
    {"coefficient": {"name": "nope"}},
    {"coefficient": {"name": "laminate_1d"}, "bogus": {}},
    {"coefficient": {"name": "laminate_1d"}, "study": {"epsilons": [0.1, 0.2]}},
    {"coefficient": {"name": "laminate_1d"}, "study": {"epsilons": [0.5]}},
    {"coefficient": {"name": "laminate_1d"}, "study": {"epsilons": []}},
    {"coefficient": {"name": "laminate_1d"}, "problem": {"bc": "robin"}},
    {"coefficient": {"name": "laminate_1d"}, "policy": {"space": 4}},
    {"coefficient": {"name": "laminate_1d"}, "smoothing": {"delta_factor": 25.0}},
    {"coefficient": {"name": "laminate_1d"}, "cell": {"n_space": "many"}},
    {"coefficient": {"name": "laminate_1d", "params": {"wrong": 1}}},
])
def test_invalid_config(data):
    with pytest.raises(ConfigError):
        cfg = parse_config(data)
        cfg.build_coefficient()


def test_toml_syntax_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[domain\nT = 1\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.toml")


@pytest.mark.parametrize("name,expected", [
    ("constant", 2.0),
    ("cosine", 2.0 * math.cos(math.pi * 0.25)),
    ("sine", 2.0 * math.sin(math.pi * 0.25)),
])
def test_sources(name, expected):
    f = make_source({"name": name, "value": 2.0}, (1.0,))
    assert float(np.asarray(f(np.array(0.25), 0.1))) == pytest.approx(expected, abs=1e-15)


# ---------------------------------------------------------------- study

@pytest.fixture(scope="module")
def small_report():
    return run_rate_study(_cfg())


def test_report_layout(small_report, tmp_path):
    csv_path, json_path = small_report.write(tmp_path)
    lines = csv_path.read_text().splitlines()
    assert tuple(lines[0].split(",")) == CSV_COLUMNS
    assert len(lines) == 4
    data = read_report(json_path)
    assert data["status"] == "fitted"
    assert data["rows"][0]["t_osc_sec"] is None
    assert [r["eps"] for r in data["rows"]] == [0.125, 0.0625, 0.03125]
    assert data["slopes"]["err_l2"]["status"] == "fitted"


def test_report_rows_consistent(small_report):
    for row in small_report.rows:
        assert row["err_l2"] > 0 and row["grad_w_l2"] > 0
        assert row["f_l2"] == pytest.approx(math.sqrt(0.0625), rel=1e-12)
        assert row["blayer_sup"] > 0


def test_study_is_deterministic(small_report):
    again = run_rate_study(_cfg())
    assert again.csv_text() == small_report.csv_text()


def test_constant_study_is_exact():
    report = run_rate_study(_cfg(coefficient={"name": "constant", "params": {"value": 1.5}}))
    assert report.status == "exact"
    assert all(r["err_l2"] == 0.0 and r["grad_w_l2"] == 0.0 for r in report.rows)
    assert all(s["status"] == "exact" for s in report.slopes.values())


def test_budget_guard():
    with pytest.raises(BudgetExceeded):
        run_rate_study(_cfg(domain={"lengths": [64.0], "T": 1.0}))


def test_short_ladder_skips_fit():
    report = run_rate_study(_cfg(study={"epsilons": [0.125, 0.0625]}))
    assert report.slopes["err_l2"]["status"] == "skipped"


def test_unsupported_schema(tmp_path):
    path = tmp_path / "r.json"
    path.write_text(json.dumps({"schema_version": 99}))
    with pytest.raises(ConfigError):
        read_report(path)


def test_identity_check_report():
    out = run_identity_check(_cfg(identity={"n_fields": 2}))
    assert len(out["fields"]) == 2
    assert out["max_rel_residual"] <= 1e-2
