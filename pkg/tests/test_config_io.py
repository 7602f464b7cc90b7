import json
import math
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motility_sim.cli import main
from motility_sim.config import config_to_dict, dump_config, parse_config
from motility_sim.core import FieldState, GridSpec
from motility_sim.errors import ConfigError, FormatError
from motility_sim.io import (CSV_COLUMNS, DiagnosticsWriter, format_number, read_diagnostics, read_snapshot,
                             snapshot_size, write_snapshot)
from motility_sim.runner import run_command, sweep_command

MINIMAL = """
grid: {nx: 8, ny: 8}
params:
  m: 2
  alpha: 1
  beta: 0.5
  d_coef: 5
  response: {kind: saturating, lambda: 1}
initial: {kind: constants, u0: 1, v0: 1, w0: 2}
"""

HOMOGENEOUS = """
grid: {nx: 4, ny: 4, lx: 8, ly: 8}
params:
  m: 2
  alpha: 1
  beta: 0.5
  d_coef: 5
  response: {kind: linear}
initial: {kind: constants, u0: 1, v0: 1, w0: 2}
control: {dt_max: 0.05}
stop: {max_time: 200, tol_conv: 1e-4}
"""


def test_minimal_document_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.control.dt_init == 1e-4
    assert cfg.control.cg_tol == 1e-10
    assert cfg.control.safety == 0.5
    assert cfg.sampling == 50
    assert cfg.eta == 1.0
    assert cfg.grid.lx == 1.0 and cfg.params.eps == 0.0
    assert cfg.snapshot_times == ()


def test_unknown_key():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "mm: 3\n")
    assert "unknown key: mm" in info.value.errors


def test_nested_unknown_key():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("alpha: 1", "alpha: 1\n  mm: 2"))
    assert "unknown key: params.mm" in info.value.errors


def test_semantic_errors_aggregate():
    text = MINIMAL.replace("m: 2", "m: 0.5").replace("d_coef: 5", "d_coef: -1")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    errs = info.value.errors
    assert any("m must exceed 1" in e for e in errs)
    assert any("d_coef" in e for e in errs)


def test_missing_keys_are_listed():
    with pytest.raises(ConfigError) as info:
        parse_config("grid: {nx: 8}\n")
    errs = info.value.errors
    for key in ("grid.ny", "params", "initial"):
        assert f"missing key: {key}" in errs


def test_syntax_error_has_line_number():
    with pytest.raises(ConfigError) as info:
        parse_config("grid: {nx: 8, ny: 8}\nparams: [1, 2\ninitial: x\n")
    assert "line" in info.value.errors[0]


def test_snapshot_times_must_be_sorted():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "snapshot_times: [2, 1]\n")


def test_parse_dump_parse_identity():
    text = MINIMAL.replace("kind: constants, u0: 1", "kind: perturbed, amplitude: 0.3, kx: 2, u0: 1")
    text += "snapshot_times: [0.5, 1.5]\nstop: {max_time: 7, tol_conv: 1e-3}\nseed: 9\n"
    cfg = parse_config(text)
    again = parse_config(dump_config(cfg))
    assert config_to_dict(again) == config_to_dict(cfg)
    assert again.grid == cfg.grid and again.initial == cfg.initial and again.stop == cfg.stop


def _state(nx=4, ny=4, seed=0):
    g = GridSpec(nx, ny, 1.5, 2.5)
    rng = np.random.default_rng(seed)
    return FieldState(rng.uniform(0, 1, g.shape), rng.uniform(0.1, 1, g.shape), rng.uniform(0, 1, g.shape), g, 0.75)


def test_snapshot_size_and_round_trip(tmp_path):
    s = _state()
    path = tmp_path / "s.ksf"
    write_snapshot(s, path)
    assert path.stat().st_size == 420 == snapshot_size(4, 4)
    back = read_snapshot(path)
    assert back.grid == s.grid and back.t == s.t
    for a, b in ((s.u, back.u), (s.v, back.v), (s.w, back.w)):
        assert a.tobytes() == b.tobytes()


def test_snapshot_layout_is_row_major(tmp_path):
    s = _state(5, 4)
    path = tmp_path / "s.ksf"
    write_snapshot(s, path)
    blob = path.read_bytes()
    assert blob[:4] == b"KSF1"
    assert int.from_bytes(blob[4:8], "little") == 5
    first_u = np.frombuffer(blob[36:44], "<f8")[0]
    second_u = np.frombuffer(blob[44:52], "<f8")[0]
    assert first_u == s.u[0, 0] and second_u == s.u[0, 1]


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "s.ksf"
    write_snapshot(_state(), path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_snapshot(path)


def test_snapshot_truncated(tmp_path):
    path = tmp_path / "s.ksf"
    write_snapshot(_state(), path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_snapshot(path)


@settings(max_examples=100)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_number_format_round_trips(x):
    assert float(format_number(x)) == x


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    rows = [{c: float(rng.normal()) * 10.0 ** int(rng.integers(-20, 20)) for c in CSV_COLUMNS} for _ in range(5)]
    path = tmp_path / "d.csv"
    with DiagnosticsWriter(path) as w:
        for r in rows:
            w.write(r)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert all(len(line.split(",")) == 16 for line in lines)
    assert read_diagnostics(path) == rows


def test_run_command_homogeneous_converges(tmp_path):
    code = run_command(parse_config(HOMOGENEOUS), tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    for key in ("classification", "u_star", "final_norms", "time_reached", "steps", "flushed_mass_total"):
        assert key in doc
    assert doc["classification"] == "converged"
    assert doc["u_star"] == pytest.approx(2.0, rel=1e-15)
    assert doc["final_norms"]["total"] < 1e-4
    rows = read_diagnostics(tmp_path / "diagnostics.csv")
    assert rows[-1]["norm_to_target"] < 1e-4
    assert parse_config((tmp_path / "config.yaml").read_text()).params.d_coef == 5.0


def test_run_command_zero_budget(tmp_path):
    code = run_command(parse_config(HOMOGENEOUS.replace("max_time: 200", "max_time: 0")), tmp_path)
    assert code == 2
    rows = read_diagnostics(tmp_path / "diagnostics.csv")
    assert len(rows) == 1 and rows[0]["t"] == 0.0


def test_run_command_rejects_zero_v(tmp_path):
    code = run_command(parse_config(HOMOGENEOUS.replace("v0: 1", "v0: 0")), tmp_path)
    assert code == 3
    doc = json.loads((tmp_path / "report.json").read_text())
    assert "PositivityError" in doc["message"]
    assert doc["steps"] == 0


def test_run_command_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_command(parse_config(HOMOGENEOUS), blocker / "out") == 4


def test_run_command_writes_requested_snapshots(tmp_path):
    cfg = parse_config(HOMOGENEOUS.replace("max_time: 200", "max_time: 1") + "snapshot_times: [0, 0.5, 1]\n")
    run_command(cfg, tmp_path)
    names = sorted(p.name for p in tmp_path.glob("*.ksf"))
    assert names == ["snapshot_0000.ksf", "snapshot_0001.ksf", "snapshot_0002.ksf"]
    assert [read_snapshot(tmp_path / n).t for n in names] == [0.0, 0.5, 1.0]


def test_sweep_singleton(tmp_path):
    summary = sweep_command(parse_config(HOMOGENEOUS), [1.0], tmp_path)
    assert summary["threshold_candidate"] == 1.0
    assert (tmp_path / "sweep.csv").read_text().splitlines()[0] == \
        "D,classification,final_norm,time_to_tolerance,exit_code,message"


def test_sweep_failures_are_rows(tmp_path):
    cfg = parse_config(HOMOGENEOUS.replace("v0: 1", "v0: 0"))
    summary = sweep_command(cfg, [1.0, 2.0], tmp_path)
    assert [r.exit_code for r in summary["rows"]] == [3, 3]
    assert summary["threshold_candidate"] is None


def test_sweep_tables_are_deterministic(tmp_path):
    cfg = parse_config(HOMOGENEOUS.replace("max_time: 200", "max_time: 20"))
    sweep_command(cfg, [1.0, 4.0], tmp_path / "a")
    sweep_command(cfg, [1.0, 4.0], tmp_path / "b", threads=2)
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


SWEEP_CONFIG = """
grid: {nx: 16, ny: 16, lx: 8, ly: 8}
params:
  m: 2
  alpha: 1
  beta: 1
  d_coef: 1
  response: {kind: linear}
initial: {kind: perturbed, u0: 1, v0: 1, w0: 0.5, amplitude: 0.2}
control: {dt_max: 0.1}
stop: {max_time: 300, tol_conv: 1e-3}
sampling: 200
"""


@pytest.mark.slow
def test_sweep_time_to_tolerance_nonincreasing(tmp_path):
    summary = sweep_command(parse_config(SWEEP_CONFIG), [0.5, 1, 2, 4, 8, 16], tmp_path, threads=3)
    times = [r.time_to_tolerance for r in summary["rows"] if r.classification == "converged"]
    assert times, "no run converged"
    assert all(not math.isnan(t) for t in times)
    assert all(b <= a * (1 + 1e-9) for a, b in zip(times, times[1:])), times


def _write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def test_cli_run(tmp_path):
    cfg = _write(tmp_path, HOMOGENEOUS)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "report.json").exists()


def test_cli_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL + "mm: 1\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "unknown key: mm" in capsys.readouterr().err


def test_cli_oracle(tmp_path, capsys):
    cfg = _write(tmp_path, HOMOGENEOUS)
    assert main(["oracle", "--config", str(cfg), "--t-end", "200", "--every", "50000"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,u,v,w"
    t, u, v, w = map(float, lines[-1].split(","))
    assert t == 200.0 and abs(u - 2.0) < 1e-6


def test_cli_sweep(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MOTILITY_SIM_THREADS", "2")
    cfg = _write(tmp_path, HOMOGENEOUS)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw"), "--d-values", "2,1"]) == 0
    out = capsys.readouterr().out
    assert "threshold_candidate=1.0" in out
