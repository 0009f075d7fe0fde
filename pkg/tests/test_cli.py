from __future__ import annotations

import json
import subprocess
import sys

import pytest

from parahom import formats
from parahom.cli import main

CONFIG = """
[domain]
lengths = [1.0]
T = 0.0625

[coefficient]
name = "laminate_1d"
params = { amplitude = 0.5 }

[study]
epsilons = [0.125, 0.0625, 0.03125]

[cell]
n_space = 32
"""


@pytest.fixture()
def config(tmp_path):
    path = tmp_path / "study.toml"
    path.write_text(CONFIG)
    return path


@pytest.mark.parametrize("command,files", [
    ("cell-solve", ["coefficient.phcf", "cell.json"]),
    ("dual-solve", ["dual.phdc", "dual.json"]),
    ("solve", ["u_eps.phgf", "u0.phgf", "solve.json"]),
    ("identity-check", ["identity.json"]),
    ("rate-study", ["rates.csv", "report.json"]),
])
def test_commands_write_outputs(config, tmp_path, command, files):
    out = tmp_path / "out"
    assert main([command, "--config", str(config), "--out", str(out), "--quiet"]) == 0
    for name in files:
        assert (out / name).stat().st_size > 0


def test_cell_json_contents(config, tmp_path):
    out = tmp_path / "out"
    main(["cell-solve", "--config", str(config), "--out", str(out), "--quiet"])
    data = json.loads((out / "cell.json").read_text())
    assert data["a_hat"][0][0][0][0] == pytest.approx(1.0, abs=1e-10)
    assert data["residual"] <= 1e-10
    samples = formats.read_coefficient(out / "coefficient.phcf")
    assert samples.shape == (1, 1, 1, 1, 32, 1)


def test_report_after_rate_study(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["rate-study", "--config", str(config), "--out", str(out), "--quiet"]) == 0
    assert main(["report", "--config", str(config), "--out", str(out)]) == 0
    assert "err_l2: slope" in capsys.readouterr().out


def test_eps_override_accepts_fractions(config, tmp_path):
    out = tmp_path / "out"
    assert main(["rate-study", "--config", str(config), "--out", str(out), "--quiet",
                 "--eps-override", "1/8,1/16,0.03125"]) == 0
    rows = (out / "rates.csv").read_text().splitlines()[1:]
    assert [float(r.split(",")[0]) for r in rows] == [0.125, 0.0625, 0.03125]


def test_rate_study_csv_is_byte_identical(config, tmp_path):
    for name in ("a", "b"):
        assert main(["rate-study", "--config", str(config), "--out", str(tmp_path / name),
                     "--quiet"]) == 0
    assert (tmp_path / "a" / "rates.csv").read_bytes() == (tmp_path / "b" / "rates.csv").read_bytes()


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["cell-solve", "--config", str(tmp_path / "absent.toml")]) == 2
    assert "config not found" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["[domain\n", "[coefficient]\nname = 'nope'\n",
                                  "[coefficient]\nname = 'laminate_1d'\n[study]\nepsilons = [0.5]\n"])
def test_invalid_config_exit_code(tmp_path, text, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    assert main(["cell-solve", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "invalid config" in capsys.readouterr().err


def test_report_without_study(config, tmp_path):
    assert main(["report", "--config", str(config), "--out", str(tmp_path / "none")]) == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    path = tmp_path / "big.toml"
    path.write_text(CONFIG.replace("lengths = [1.0]", "lengths = [64.0]").replace("0.0625\n", "1.0\n", 1))
    assert main(["rate-study", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "BudgetExceeded" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert main(["no-such-command"]) == 2


def test_module_entry_point(config, tmp_path):
    res = subprocess.run([sys.executable, "-m", "parahom", "cell-solve", "--config", str(config),
                          "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0
    assert "a_hat" in res.stdout
