"""On-disk formats: KSF1 field snapshots, diagnostics CSV, and the run report."""
from __future__ import annotations

import csv
import json
import os
import struct

import numpy as np

from .core import FieldState, GridSpec
from .errors import FormatError

SNAPSHOT_MAGIC = b"KSF1"
_HEADER = struct.Struct("<4sII3d")

CSV_COLUMNS = (
    "t", "mass_u", "mass_w", "mass_combined", "mass_v", "max_w", "min_v", "l2_u",
    "dirichlet_v", "dirichlet_u_pow", "duality_integrand", "consumption_rate",
    "consumption_total", "lyapunov", "norm_to_target", "dt_used",
)


def snapshot_size(nx: int, ny: int) -> int:
    return _HEADER.size + 24 * nx * ny


def write_snapshot(state: FieldState, path) -> None:
    """Write magic, ``u32 nx, ny``, ``f64 lx, ly, t``, then u, v, w as row-major little-endian f64."""
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, g.nx, g.ny, g.lx, g.ly, state.t))
        for arr in (state.u, state.v, state.w):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(path) -> FieldState:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: file too short for header ({len(blob)} bytes)")
    magic, nx, ny, lx, ly, t = _HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if len(blob) != snapshot_size(nx, ny):
        raise FormatError(f"{path}: expected {snapshot_size(nx, ny)} bytes, found {len(blob)}")
    n = nx * ny
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    u, v, w = (data[k * n:(k + 1) * n].reshape(nx, ny) for k in range(3))
    return FieldState(u, v, w, GridSpec(nx, ny, lx, ly), t)


def format_number(x) -> str:
    return format(float(x), ".17g")


class DiagnosticsWriter:
    """Streams diagnostics rows in the fixed CSV schema."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(CSV_COLUMNS)

    def write(self, values: dict) -> None:
        self._writer.writerow([format_number(values[c]) for c in CSV_COLUMNS])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise FormatError(f"{path}: unexpected header {header}")
        rows = []
        for line in reader:
            if len(line) != len(CSV_COLUMNS):
                raise FormatError(f"{path}: row has {len(line)} fields")
            rows.append({k: float(v) for k, v in zip(CSV_COLUMNS, line)})
    return rows


def write_report(report: dict, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
