"""Run orchestration: single runs with outputs on disk, and D sweeps."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .config import RunConfig, dump_config
from .diagnostics import DiagnosticsAccumulator, delta_floor, duality_windows, sample
from .errors import SimulationError
from .io import DiagnosticsWriter, format_number, write_report, write_snapshot
from .stepper import ABORTED, BUDGET_EXHAUSTED, CONVERGED, RunReport, run_until

logger = logging.getLogger(__name__)

EXIT_CODES = {CONVERGED: 0, BUDGET_EXHAUSTED: 2, ABORTED: 3}
EXIT_IO = 4

SWEEP_COLUMNS = ("D", "classification", "final_norm", "time_to_tolerance", "exit_code", "message")


def simulate(cfg: RunConfig, writer: Optional[DiagnosticsWriter] = None,
             snapshot_dir: Optional[Path] = None) -> tuple[RunReport, DiagnosticsAccumulator]:
    """Run ``cfg`` in memory, optionally streaming CSV rows and snapshots.

    Raises :class:`SimulationError` if the initial state is invalid.
    """
    state = cfg.initial_state()
    state.validate()
    p = cfg.params
    u_star = state.mean("u") + p.beta * state.mean("w")
    acc = DiagnosticsAccumulator()
    v_floor = cfg.v_floor if cfg.v_floor is not None else delta_floor(state.mass("u"), state.grid)

    def on_sample(s, outcome):
        rec = sample(s, p, cfg.eta, u_star)
        acc.add_sample(rec)
        if writer is not None:
            row = rec.as_dict()
            row["consumption_total"] = acc.totals.consumption_total
            row["dt_used"] = 0.0 if outcome is None else outcome.dt_used
            writer.write(row)

    snapshots = []

    def on_time(s):
        if snapshot_dir is not None:
            path = snapshot_dir / f"snapshot_{len(snapshots):04d}.ksf"
            write_snapshot(s, path)
            snapshots.append(path.name)

    report = run_until(state, p, cfg.control, cfg.stop, callback=on_sample, stride=cfg.sampling,
                       on_step=acc.add_step, stop_times=cfg.snapshot_times, on_time=on_time,
                       v_floor=v_floor)
    return report, acc


def report_document(cfg: RunConfig, report: RunReport, acc: DiagnosticsAccumulator) -> dict:
    windows = duality_windows(acc.history)
    tot = acc.totals
    return {
        "classification": report.classification,
        "u_star": report.u_star,
        "final_norms": report.final_norms,
        "time_reached": report.time_reached,
        "steps": report.steps,
        "flushed_mass_total": report.flushed_mass_total,
        "message": report.message,
        "v_floor_violations": report.v_floor_violations,
        "cumulative": {
            "consumption_total": tot.consumption_total,
            "dirichlet_v_total": tot.dirichlet_v_total,
            "dirichlet_w_total": tot.dirichlet_w_total,
            "dirichlet_u_pow_total": tot.dirichlet_u_pow_total,
        },
        "duality_window_max": max((v for _, v in windows), default=None),
        "d_coef": cfg.params.d_coef,
    }


def run_command(cfg: RunConfig, out_dir=None) -> int:
    """Execute one run, writing ``diagnostics.csv``, ``report.json``, snapshots and the resolved config.

    Returns 0 on convergence, 2 when the budget ran out, 3 on abort, 4 on I/O failure.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
        with DiagnosticsWriter(out / "diagnostics.csv") as writer:
            try:
                report, acc = simulate(cfg, writer, out)
            except SimulationError as exc:
                # invalid initial state: nothing was stepped
                logger.error("run aborted before stepping: %s", exc)
                doc = {"classification": ABORTED, "message": f"{type(exc).__name__}: {exc}",
                       "steps": 0, "time_reached": 0.0}
                write_report(doc, out / "report.json")
                return EXIT_CODES[ABORTED]
        write_report(report_document(cfg, report, acc), out / "report.json")
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_IO
    logger.info("%s at t=%.6g after %d steps (norm %.3e)", report.classification,
                report.time_reached, report.steps, report.final_norm)
    return EXIT_CODES[report.classification]


@dataclass(frozen=True)
class SweepRow:
    d: float
    classification: str
    final_norm: float
    time_to_tolerance: float
    exit_code: int
    message: str = ""


def _sweep_one(cfg: RunConfig, d: float, out: Path) -> SweepRow:
    run_cfg = replace(cfg, params=replace(cfg.params, d_coef=float(d)))
    code = run_command(run_cfg, out / f"D_{format_number(d)}")
    doc_path = out / f"D_{format_number(d)}" / "report.json"
    try:
        doc = json.loads(doc_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        return SweepRow(d, ABORTED, math.nan, math.nan, EXIT_IO, str(exc))
    classification = doc.get("classification", ABORTED)
    norms = doc.get("final_norms") or {}
    t_tol = doc["time_reached"] if classification == CONVERGED else math.nan
    return SweepRow(d, classification, norms.get("total", math.nan), t_tol, code, doc.get("message", ""))


def sweep_command(cfg: RunConfig, d_values: Sequence[float], out_dir=None, threads: int = 1) -> dict:
    """Run ``cfg`` once per D (same initial data), write ``sweep.csv`` and return the summary.

    The threshold candidate is the smallest D in the list whose run converged.
    """
    d_values = [float(d) for d in d_values]
    if not d_values or any(not d > 0 for d in d_values):
        raise ValueError("d_values must be a nonempty list of positive numbers")
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda d: _sweep_one(cfg, d, out), d_values))
    else:
        rows = [_sweep_one(cfg, d, out) for d in d_values]

    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([format_number(r.d), r.classification, format_number(r.final_norm),
                        format_number(r.time_to_tolerance), r.exit_code, r.message])
    converged = [r.d for r in rows if r.classification == CONVERGED]
    summary = {"rows": rows, "threshold_candidate": min(converged) if converged else None}
    write_report({"threshold_candidate": summary["threshold_candidate"],
                  "d_values": d_values,
                  "classifications": [r.classification for r in rows]}, out / "sweep_report.json")
    return summary
