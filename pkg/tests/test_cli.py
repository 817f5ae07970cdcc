"""Command-line interface tests: exit codes, artifacts, happy paths.

One tiny oscillator workspace is calibrated once per module (threshold
overrides skip the probe runs) and shared by the run/sweep/analyze tests.
"""

import json
import os

import pytest

from compound_uq.cli import main
from compound_uq.rollout import read_trace
from compound_uq.snapshot import CalibrationSnapshot

TINY = {
    "env_id": "MassSpring1D",
    "horizon": 60,
    "onset_t": 10,
    "grid": {
        "po_levels": [0.0, 0.5],
        "delay_levels": [0, 1],
        "shift_levels": [None],
        "seeds": [0],
    },
    "ensemble": {"t_pre": 80, "m_members": 2, "epochs": 5},
    "thresholds": {"tau_low": 0.2, "tau_high": 0.5},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = dict(TINY)
    cfg["output_dir"] = str(root / "runs")
    cfg_path = str(root / "config.json")
    with open(cfg_path, "w") as fh:
        json.dump(cfg, fh)
    rc = main(["calibrate", "--config", cfg_path])
    assert rc == 0
    return {"root": root, "config": cfg_path, "snapshot": str(root / "runs" / "calibration.json")}


def test_no_command_is_usage_error(capsys):
    assert main([]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_command_and_flag(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["run", "--bogus"]) == 1
    capsys.readouterr()


def test_version_flag_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_calibrate_writes_a_loadable_snapshot(workspace, capsys):
    snap = CalibrationSnapshot.load(workspace["snapshot"])
    assert snap.env_id == "MassSpring1D"
    assert snap.thresholds.tau_low == 0.2 and snap.thresholds.tau_high == 0.5
    assert snap.ensemble.frozen


def test_calibrate_missing_config_file(capsys):
    assert main(["calibrate", "--config", "/nonexistent/cfg.json"]) == 1
    assert "not found" in capsys.readouterr().err


def test_calibrate_exit_code_two_without_stressors(tmp_path, capsys):
    cfg = dict(TINY)
    cfg.pop("thresholds")
    cfg["grid"] = {"po_levels": [0.0], "delay_levels": [0], "shift_levels": [None], "seeds": [0]}
    cfg["ensemble"] = {"t_pre": 60, "m_members": 2, "epochs": 2}
    cfg["output_dir"] = str(tmp_path)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["calibrate", "--config", str(path)]) == 2
    assert "calibration error" in capsys.readouterr().err


def test_run_writes_trace(workspace, capsys):
    out = str(workspace["root"] / "trace_run.jsonl")
    rc = main(
        [
            "run",
            "--config",
            workspace["config"],
            "--po",
            "0.5",
            "--delay",
            "1",
            "--seed",
            "2",
            "--out",
            out,
        ]
    )
    assert rc == 0
    text = capsys.readouterr().out
    assert "[C3]" in text and f"wrote {out}" in text
    header, steps, footer = read_trace(out)
    assert header["policy_mode"] == "monitor"
    assert len(steps) == 60
    assert footer["seed"] == 2


def test_run_adaptive_mode(workspace, capsys):
    out = str(workspace["root"] / "trace_adaptive.jsonl")
    rc = main(["run", "--config", workspace["config"], "--policy-mode", "adaptive", "--out", out])
    assert rc == 0
    header, _, _ = read_trace(out)
    assert header["policy_mode"] == "adaptive"
    capsys.readouterr()


def test_run_rejects_bad_shift(workspace, capsys):
    assert main(["run", "--config", workspace["config"], "--shift", "stiffness"]) == 1
    assert main(["run", "--config", workspace["config"], "--shift", "stiffness=abc"]) == 1
    assert main(["run", "--config", workspace["config"], "--shift", "gain_left=0.5"]) == 1
    capsys.readouterr()


def test_run_missing_snapshot(workspace, capsys):
    rc = main(
        ["run", "--config", workspace["config"], "--snapshot", str(workspace["root"] / "nope.json")]
    )
    assert rc == 1
    assert "not found" in capsys.readouterr().err


def test_sweep_writes_reports(workspace, capsys):
    out_dir = str(workspace["root"] / "sweep")
    rc = main(["sweep", "--config", workspace["config"], "--out-dir", out_dir])
    assert rc == 0
    text = capsys.readouterr().out
    assert "cells=4" in text and "records=1" in text
    for name in ("sweep_summary.json", "synergy_report.json", "degradation.csv", "stratified_rates.json"):
        assert os.path.exists(os.path.join(out_dir, name))
    summary = json.load(open(os.path.join(out_dir, "sweep_summary.json")))
    assert summary["policy_mode"] == "monitor"
    assert len(summary["cells"]) == 4


def test_analyze_recomputes_from_traces(workspace, capsys):
    out_dir = str(workspace["root"] / "sweep")
    report_path = str(workspace["root"] / "report.json")
    rc = main(
        ["analyze", "--config", workspace["config"], "--trace-dir", out_dir, "--out", report_path]
    )
    assert rc == 0
    text = capsys.readouterr().out
    assert "records=1" in text
    report = json.load(open(report_path))
    assert report["n_configs"] == 1


def test_analyze_empty_dir(workspace, tmp_path, capsys):
    rc = main(["analyze", "--config", workspace["config"], "--trace-dir", str(tmp_path)])
    assert rc == 1
    assert "no trace files" in capsys.readouterr().err


def test_oracle_check_small_batch(tmp_path, capsys):
    out = str(tmp_path / "bounds.csv")
    rc = main(["oracle-check", "--n-samples", "200", "--grid-points", "21", "--out", out])
    assert rc == 0
    text = capsys.readouterr().out
    assert "violations=0" in text and "coupling_inversions=0" in text
    lines = open(out).read().splitlines()
    assert len(lines) == 201  # header plus one row per sample


def test_oracle_check_rejects_bad_sample_count(capsys):
    assert main(["oracle-check", "--n-samples", "0"]) == 1
    capsys.readouterr()


def test_oracle_check_exit_three_on_violation(monkeypatch, capsys):
    class Broken:
        holds = False
        slack = 0.0
        h_joint = 1.0
        mi = 0.0
        bound = 0.0

    monkeypatch.setattr("compound_uq.cli.verify_bound", lambda belief: Broken())
    assert main(["oracle-check", "--n-samples", "3"]) == 3
    assert "invariant violation" in capsys.readouterr().err
