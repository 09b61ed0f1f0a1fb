from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from rieszlab import cli, grid, harness


def test_list_checks(capsys):
    assert cli.main(["list-checks", "-v"]) == 0
    out = capsys.readouterr().out
    for cid, d in harness.REGISTRY.items():
        assert cid in out and d.theorem in out


def test_list_symbols(capsys):
    assert cli.main(["list-symbols", "--functions"]) == 0
    out = capsys.readouterr().out
    assert "llogl" in out and "log_power" in out


def test_run_writes_reports(tmp_path, capsys):
    js, cs = tmp_path / "r.json", tmp_path / "r.csv"
    code = cli.main(["run", "DIV-EX", "--json", str(js), "--csv", str(cs), "-v"])
    assert code == 0
    assert "DIV-EX" in capsys.readouterr().out
    data = json.loads(js.read_text())
    assert data[0]["verdict"] == "pass"
    assert cs.read_text().splitlines()[0].split(",") == harness.CSV_COLUMNS


def test_run_with_resolution_override(capsys):
    assert cli.main(["run", "PW-SOB,DIV-EX", "--res", "16,32"]) == 0
    out = capsys.readouterr().out
    assert "16:" in out and "32:" in out


@pytest.mark.parametrize("argv", [
    ["run", "NO-SUCH"],
    ["run", "DIV-EX", "--res", "16,24"],
    ["eval", "riesz", "bump", "--res", "100"],
])
def test_invalid_requests_exit_with_two(argv, capsys):
    assert cli.main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_invalid_config_exits_with_two(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"checks": {"PW-END": {"params": {"alphas": [1.2]}}}}))
    assert cli.main(["run", "PW-END", "--config", str(path)]) == 2
    path.write_text(json.dumps({"unexpected": 1}))
    assert cli.main(["run", "PW-END", "--config", str(path)]) == 2


def test_build_sparse(tmp_path, capsys):
    out = tmp_path / "family.json"
    code = cli.main(["build-sparse", "bump", "--res", "64", "--shift", "1,0", "--s", "1.2",
                     "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "certificate pass" in text and "domination pass" in text
    assert json.loads(out.read_text())["shift"] == [1, 0]


def test_eval_summary_and_saved_grid(tmp_path, capsys):
    out = tmp_path / "pot.npz"
    assert cli.main(["eval", "riesz", "ball_indicator", "--res", "64", "--alpha", "1.0",
                     "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["operator"] == "riesz" and summary["max_abs"] > 0
    saved = grid.load(out)
    assert float(np.abs(saved.values).max()) == pytest.approx(summary["max_abs"])


@pytest.mark.parametrize("operator", sorted(cli.OPERATORS))
def test_every_operator_runs(operator, capsys):
    alpha = "0.5" if operator == "frac-derivative" else "1.0"
    argv = ["eval", operator, "dipole", "--res", "32", "--alpha", alpha, "--symbol", "power"]
    assert cli.main(argv) == 0
    assert np.isfinite(json.loads(capsys.readouterr().out)["max_abs"])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rieszlab.cli", "list-checks"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "NEG-MAX" in proc.stdout
