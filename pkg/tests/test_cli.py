import json
import subprocess
import sys

import pytest

from multigroup.cli import main


def test_fixtures_verify_all(capsys):
    for name in ("prop45", "prop52", "propC2", "overlap"):
        assert main(["fixtures", "verify", "--name", name]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("pass") >= 7


def test_fixtures_emit(tmp_path):
    assert main(["fixtures", "emit", "--name", "prop45", "--out", str(tmp_path)]) == 0
    obj = json.loads((tmp_path / "prop45-scenario1.json").read_text())
    assert obj["expected_risk"] == [["1/2", "7/8"], ["7/8", "1/2"]]
    assert main(["fixtures", "emit", "--name", "propC2", "--eps", "1/10", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "propC2-eps=1_10.json").exists()


def test_fixtures_verify_failure_exit(monkeypatch):
    from multigroup import fixtures

    monkeypatch.setattr(fixtures, "verify_propC2", lambda eps: fixtures.MultiaccuracyCheck(eps, 1, eps, eps))
    assert main(["fixtures", "verify", "--name", "propC2", "--eps", "1/4"]) == 1


def test_algorithm_commands(tmp_path, capsys):
    assert main(["prepend", "--instance", "prop45", "--n", "300", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "report.json").exists()
    assert main(["experts", "--n", "300"]) == 0
    assert main(["realizable", "--instance", "realizable10", "--n", "300"]) == 0
    assert main(["realizable", "--instance", "prop52", "--n", "300"]) == 1
    assert "assertion" in capsys.readouterr().out


def test_min_frequency_gate(monkeypatch):
    from multigroup import harness

    assert main(["prepend", "--instance", "desk8", "--n", "200", "--min-frequency", "0"]) == 0
    real = harness._run_trial

    def unsatisfied(cfg, inst, t):
        return {**real(cfg, inst, t), "all_satisfied": False}

    monkeypatch.setattr(harness, "_run_trial", unsatisfied)
    assert main(["prepend", "--instance", "desk8", "--n", "200", "--min-frequency", "0.5"]) == 1


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["prepend", "--instance", "nope"]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"algorithm": "boost", "instance": "prop45"}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "unknown algorithm" in capsys.readouterr().err


def test_run_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"algorithm": "prepend", "instance": "desk8", "n": 300, "trials": 2,
                               "out": str(tmp_path / "o")}))
    assert main(["run", "--config", str(cfg)]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["summary"]["n_trials"] == 2


def test_compare_and_bounds(tmp_path, capsys):
    assert main(["compare", "--instance", "prop45", "--n", "500", "--out", str(tmp_path / "c.csv")]) == 0
    assert "refused" in capsys.readouterr().out
    assert main(["bounds", "--hypotheses", "3", "--groups", "3", "--count", "500"]) == 0
    assert "consistent_majority" in capsys.readouterr().out


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "multigroup.cli", "bounds", "--hypotheses", "2",
                        "--groups", "2", "--count", "100"], capture_output=True, text=True)
    assert r.returncode == 0 and "sleeping_experts" in r.stdout
