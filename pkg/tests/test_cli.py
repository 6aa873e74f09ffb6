import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from varinertia.cli import main

SCENARIOS = Path(__file__).resolve().parents[1] / "docs" / "scenarios"


def _header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def _write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _doc(name):
    return json.loads((SCENARIOS / name).read_text())


def test_certify(tmp_path, capsys):
    assert main(["certify", "--scenario", str(SCENARIOS / "governor_pair.json"), "--out", str(tmp_path)]) == 0
    assert _header(tmp_path / "certificates.csv") == ["bus", "rho", "rate_bound", "argmin_frequency", "method"]
    assert "riccati-verified" in capsys.readouterr().out


def test_equilibrium_and_gamma(tmp_path, capsys):
    sc = str(SCENARIOS / "ring4_rate_limited.json")
    assert main(["equilibrium", "--scenario", sc, "--out", str(tmp_path), "--after-disturbances"]) == 0
    assert _header(tmp_path / "equilibrium_lines.csv") == ["line", "eta", "p"]
    assert "cycle rank 1" in capsys.readouterr().out
    assert main(["gamma", "--scenario", sc, "--out", str(tmp_path), "--bus", "2", "--offset", "0.01"]) == 0
    assert _header(tmp_path / "gamma_buses.csv") == ["bus", "omega", "s"]
    assert "slack bus 2" in capsys.readouterr().out


def test_simulate_outputs(tmp_path, capsys):
    sc = str(SCENARIOS / "ring4_rate_limited.json")
    assert main(["simulate", "--scenario", sc, "--out", str(tmp_path), "--model", "linear"]) == 0
    head = _header(tmp_path / "trajectory.csv")
    assert head[0] == "t" and head[-1] == "V" and "eta_1-2" in head
    assert _header(tmp_path / "policy_trace.csv") == ["t", "bus", "Mv", "u", "phase"]
    assert (tmp_path / "frequency.csv").exists() and (tmp_path / "inertia.csv").exists()
    assert "convergent" in capsys.readouterr().out


def test_verify(tmp_path, capsys):
    sc = str(SCENARIOS / "ring4_bang_bang.json")
    assert main(["verify", "--scenario", sc, "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "lyapunov_summary.json").read_text())
    assert summary["monotone_ok"] is False and summary["rate_compliant"] is False
    assert _header(tmp_path / "lyapunov.csv")[-1] == "bound"


def test_destabilize(tmp_path, capsys):
    sc = str(SCENARIOS / "two_bus_destabilizer.json")
    assert main(["destabilize", "--scenario", sc, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "strictly increasing: True" in out and "escape radius" in out
    assert _header(tmp_path / "peaks.csv") == ["cycle", "t", "deviation"]
    not_attack = str(SCENARIOS / "governor_pair.json")
    assert main(["destabilize", "--scenario", not_attack, "--out", str(tmp_path)]) == 1


def test_batch(tmp_path, capsys):
    doc = _doc("ring4_randomized.json")
    doc["sim"]["T"] = 10.0
    sc = _write(tmp_path, doc)
    assert main(["batch", "--scenario", sc, "--out", str(tmp_path), "--runs", "3", "--seed", "5"]) == 0
    out = capsys.readouterr().out
    digest = out.split("digest ")[1].strip()
    with open(tmp_path / "runs.csv") as fh:
        rows = list(csv.reader(fh))
    assert [r[0] for r in rows[1:]] == ["5", "6", "7"]
    assert main(["batch", "--scenario", sc, "--out", str(tmp_path), "--runs", "3", "--seed", "5",
                 "--workers", "2"]) == 0
    assert capsys.readouterr().out.split("digest ")[1].strip() == digest


def test_invalid_scenario_exit_code(tmp_path, capsys):
    doc = _doc("ring4_bang_bang.json")
    doc["policy"]["buses"] = ["99"]
    assert main(["simulate", "--scenario", _write(tmp_path, doc), "--out", str(tmp_path)]) == 1
    assert "'99'" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    doc = _doc("ring4_rate_limited.json")
    doc["disturbances"][0]["delta_pL"] = 40.0
    sc = _write(tmp_path, doc)
    assert main(["equilibrium", "--scenario", sc, "--out", str(tmp_path), "--after-disturbances"]) == 2
    assert "overloaded" in capsys.readouterr().err


def test_io_error_exit_codes(tmp_path):
    assert main(["certify", "--scenario", str(tmp_path / "missing.json")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    sc = str(SCENARIOS / "governor_pair.json")
    assert main(["certify", "--scenario", sc, "--out", str(blocker)]) == 3


def test_usage_errors():
    with pytest.raises(SystemExit):
        main(["simulate"])
    with pytest.raises(SystemExit):
        main(["simulate", "--scenario", "x", "--model", "dc"])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "varinertia.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("certify", "equilibrium", "gamma", "simulate", "verify", "destabilize", "batch"):
        assert cmd in res.stdout
