"""Command-line interface: config round trip, artifacts, and exit codes.

Subcommands run in-process through main() at miniature sizes; artifacts land
in a temp directory through the QUENCHLAB_OUT override.  The config parser
is held to its contract that parse(emit(cfg)) reproduces cfg exactly.
"""

import json
import math
import os
import subprocess
import sys

import pytest

from quenchlab import SweepResult, ValidationError
from quenchlab.cli import (
    KEYS,
    RunConfig,
    TIERS,
    dispatch,
    main,
    parse_config,
)
from quenchlab.harness import BracketRow, Verdict

LMIN_AUTO = 7.283828385893889
L_SMALL = LMIN_AUTO / 8.0

TINY = ["--l", "1", "--n-per-cell", "16", "--x-half-cells", "3",
        "--t-end", "0.3"]


# ---------------------------------------------------------------------------
# configuration

def test_config_roundtrip(tmp_path):
    cfg = RunConfig({"l": 1.0 / 3.0, "A": 123.456789012345678,
                     "snapshot_times": (0.1, 0.2 / 3.0),
                     "stop_on_quench": True, "tier": "fine",
                     "tag": "demo"})
    path = tmp_path / "run.cfg"
    path.write_text(cfg.emit())
    back = parse_config(str(path))
    assert back.values() == cfg.values()  # floats survive %.17g exactly


def test_config_defaults_and_tiers():
    cfg = RunConfig().validate()
    assert cfg.resolved_n_per_cell() == TIERS["standard"] == 256
    assert RunConfig({"tier": "coarse"}).resolved_n_per_cell() == 128
    assert RunConfig({"n_per_cell": 48}).resolved_n_per_cell() == 48
    assert cfg.resolved_t_end() == 20.0  # 20 max(l^2, 1/M) at l = M = 1
    assert cfg.resolved_h0() == 1.0 / 16.0
    assert cfg.resolved_x_half_cells() == 2 + 8  # slab: L0/(pi l) + margin
    assert RunConfig({"kind": "cell"}).resolved_x_half_cells() == 9
    assert RunConfig({"x_half_cells": 4}).resolved_x_half_cells() == 4


def test_config_file_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[flow]\nwibble = 3\n")
    with pytest.raises(ValidationError, match="unknown key 'wibble' at .* line 2"):
        parse_config(str(path))
    path.write_text("l = 1\nl = 2\n")
    with pytest.raises(ValidationError, match="duplicate key 'l' .* line 2"):
        parse_config(str(path))
    path.write_text("l == oops\n")
    with pytest.raises(ValidationError, match="expects a float"):
        parse_config(str(path))
    path.write_text("just some words\n")
    with pytest.raises(ValidationError, match="expected key = value"):
        parse_config(str(path))
    with pytest.raises(ValidationError, match="does not exist"):
        parse_config(str(tmp_path / "absent.cfg"))
    with pytest.raises(ValidationError, match="unknown key 'nope'"):
        parse_config(None, {"nope": "1"})
    with pytest.raises(ValidationError, match="expects an integer"):
        parse_config(None, {"seed": "two"})


def test_config_overrides_win(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("l = 2.0\nA = 7\n")
    cfg = parse_config(str(path), {"l": "3.0"})
    assert cfg.l == 3.0 and cfg.A == 7.0


def test_config_validation():
    with pytest.raises(ValidationError, match="tier"):
        RunConfig({"tier": "bogus"}).validate()
    with pytest.raises(ValidationError, match="initial kind"):
        RunConfig({"kind": "blob"}).validate()
    with pytest.raises(ValidationError, match="cfl"):
        RunConfig({"cfl": 0.95}).validate()
    with pytest.raises(ValidationError, match="theta1 < theta2"):
        RunConfig({"theta1": 0.6, "theta2": 0.4}).validate()
    with pytest.raises(ValidationError, match="seed"):
        RunConfig({"seed": -1}).validate()
    with pytest.raises(ValidationError, match="scheme"):
        RunConfig({"scheme": "magic"}).validate()


# ---------------------------------------------------------------------------
# exit codes

def test_exit_code_validation_error(capsys):
    assert main(["simulate", "--tier", "bogus"]) == 1
    assert "error:" in capsys.readouterr().err


def test_exit_code_numerical_abort(out_dir, capsys):
    code = main(["simulate", *TINY, "--inject-nan-step", "5"])
    assert code == 2
    assert "numerical abort" in capsys.readouterr().err


def test_exit_code_censored_sweep(out_dir, capsys):
    code = main(["sweep", "--l", "1", "--n-per-cell", "16", "--t-end", "1.0",
                 "--A-start", "1", "--A-max", "2", "--L0-over-pil", "1",
                 "--tol-rel", "0.5", "--prescan", "0", "--jobs", "1"])
    assert code == 3
    out = capsys.readouterr().out
    assert "censored" in out
    assert (out_dir / "sweep" / "sweep.csv").exists()


def test_unknown_command_rejected():
    with pytest.raises(ValidationError, match="unknown command"):
        dispatch("bogus", RunConfig().validate())


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "quenchlab.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout and "exit-prob" in proc.stdout


# ---------------------------------------------------------------------------
# subcommand artifacts

def test_simulate_artifacts(out_dir, capsys):
    assert main(["simulate", *TINY, "--tag", "smoke"]) == 0
    out = capsys.readouterr().out
    assert "status=completed" in out
    d = out_dir / "smoke"
    for name in ("monitor.csv", "monitor.png", "field.raw", "field.raw.json",
                 "field.png", "manifest.json"):
        assert (d / name).exists(), name
        assert (d / name).stat().st_size > 0, name
    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["status"] == "completed"
    assert manifest["config"]["l"] == 1.0


def test_verify_subsolution_above_critical(out_dir, capsys):
    l = 2.0 * LMIN_AUTO
    assert main(["verify-subsolution", "--l", "%.17g" % l,
                 "--n-per-cell", "128"]) == 0
    out = capsys.readouterr().out
    assert "max residual" in out
    d = out_dir / "verify-subsolution"
    report = json.loads((d / "report.json").read_text())
    assert report["applicable"] is True
    assert report["max_residual"] <= 1e-3
    assert (d / "profile.png").stat().st_size > 0


def test_verify_subsolution_below_critical(out_dir, capsys):
    assert main(["verify-subsolution", "--l", "1.0"]) == 0
    out = capsys.readouterr().out
    assert "below the critical size" in out
    report = json.loads(
        (out_dir / "verify-subsolution" / "report.json").read_text())
    assert report["applicable"] is False
    assert report["boundary_value"] >= 0.0


@pytest.mark.filterwarnings("ignore:boundary-mass-leak")
def test_decay_artifacts(out_dir, capsys):
    assert main(["decay", "--l", "1", "--n-per-cell", "16",
                 "--x-half-cells", "3", "--monitor-stride", "1",
                 "--t-window", "0.5,2.0", "--A-list", "0"]) == 0
    assert "exponent" in capsys.readouterr().out
    d = out_dir / "decay"
    for name in ("decay.csv", "decay.png", "monitor_A0.csv", "manifest.json"):
        assert (d / name).exists(), name
    with open(d / "decay.csv") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "A,exponent,stderr"
    assert len(lines) == 2


def test_decay_bad_window(out_dir):
    assert main(["decay", "--l", "1", "--n-per-cell", "16",
                 "--t-window", "2.0,0.5"]) == 1


def test_exit_prob_artifacts(out_dir, capsys):
    assert main(["exit-prob", "--l", "1", "--A", "5", "--n-paths", "256",
                 "--n-times", "5", "--t-max", "0.05",
                 "--n-per-cell", "32", "--seed", "3"]) == 0
    assert "256 paths" in capsys.readouterr().out
    d = out_dir / "exit-prob"
    for name in ("mc.csv", "q_table.raw", "q_table.raw.json", "exit.png",
                 "manifest.json"):
        assert (d / name).exists(), name
    sidecar = json.loads((d / "q_table.raw.json").read_text())
    assert sidecar["nx"] == 33 and len(sidecar["times"]) == 5


@pytest.mark.filterwarnings("ignore:boundary-mass-leak")
def test_sweep_jobs_byte_identity(out_dir):
    args = ["sweep", "--l", "%.17g" % L_SMALL, "--n-per-cell", "16",
            "--t-end", "5.0", "--A-start", "500", "--A-max", "8000",
            "--L0-over-pil", "1,2", "--tol-rel", "0.5", "--prescan", "0",
            "--seed", "0"]
    assert main([*args, "--jobs", "1", "--tag", "j1"]) == 0
    assert main([*args, "--jobs", "4", "--tag", "j4"]) == 0
    b1 = (out_dir / "j1" / "sweep.csv").read_bytes()
    b4 = (out_dir / "j4" / "sweep.csv").read_bytes()
    assert b1 == b4
    assert (out_dir / "j1" / "sweep.png").stat().st_size > 0


def test_fit_from_csv(out_dir, tmp_path, capsys):
    rows = []
    for L0 in (2.0, 3.0, 4.0, 6.0):
        row = BracketRow(L0, 128, 20.0)
        row.A_lo = 7.0 * L0 ** 4 / 1.05
        row.A_hi = 7.0 * L0 ** 4 * 1.05
        row.verdict_lo = Verdict("Undecided", 20.0)
        row.verdict_hi = Verdict("Quenched", 10.0)
        rows.append(row)
    path = tmp_path / "pilot.csv"
    SweepResult(rows).write_csv(path)
    assert main(["fit", "--sweep-csv", str(path)]) == 0
    assert "p = 4" in capsys.readouterr().out
    d = out_dir / "fit"
    fit = json.loads((d / "fit.json").read_text())
    assert fit["p"] == pytest.approx(4.0, abs=1e-9)
    assert fit["C_ln"] is not None
    assert (d / "fit.png").stat().st_size > 0


def test_fit_missing_csv(out_dir):
    assert main(["fit", "--sweep-csv", "/nonexistent/sweep.csv"]) == 1


def test_theorem1_artifacts(out_dir, capsys):
    l = 2.0 * LMIN_AUTO
    assert main(["theorem1", "--l-list", "%.17g" % l, "--A-list", "0",
                 "--t-end", "50", "--n-per-cell", "16",
                 "--x-half-cells", "2"]) == 0
    out = capsys.readouterr().out
    assert "transition band" in out
    d = out_dir / "theorem1"
    for name in ("verdicts.csv", "theorem1.png", "manifest.json"):
        assert (d / name).exists(), name
    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["l_min"] == pytest.approx(LMIN_AUTO, rel=1e-12)
