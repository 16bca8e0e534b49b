"""On-disk formats: binary state snapshots, run CSVs, legacy VTK dumps.

Snapshot layout (little-endian throughout):

    bytes 0..3    magic b"SH3D"
    u32           format version (1)
    u32 x 3       nx, ny, nz (interval counts)
    f64 x 6       dx, dy, dz, epsilon, eta, t
    f64 x nodes   node values, x index fastest

Node data is written x-fastest so a snapshot and the matching VTK dump
share one ordering.  Round-trips are bitwise: the reader rebuilds the
exact float64 array that was written.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .energy import PhysParams
from .lattice import Field, GridSpec
from .scheme import RunLog, RunRow

SNAPSHOT_MAGIC = b"SH3D"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sI3I6d")


class StorageError(RuntimeError):
    pass


def _x_fastest(values: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(values.transpose(2, 1, 0))


def write_snapshot(path: str, field: Field, params: PhysParams, t: float) -> None:
    g = field.grid
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.nx, g.ny, g.nz,
        g.dx, g.dy, g.dz, params.epsilon, params.eta, t,
    )
    data = _x_fastest(field.values).astype("<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_snapshot(path: str) -> tuple[Field, PhysParams, float]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise StorageError(f"{path}: truncated header")
    magic, version, nx, ny, nz, dx, dy, dz, eps, eta, t = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise StorageError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise StorageError(f"{path}: unsupported version {version}")
    grid = GridSpec(nx, ny, nz, dx, dy, dz)
    expected = _HEADER.size + 8 * grid.node_count
    if len(raw) != expected:
        raise StorageError(f"{path}: {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    values = flat.reshape(nz + 1, ny + 1, nx + 1).transpose(2, 1, 0)
    return Field(grid, values), PhysParams(epsilon=eps, eta=eta), t


# on-disk column names; the energy column is capitalized, RunRow calls it h
RUN_COLUMNS = (
    "n", "t", "dt", "H", "phi1", "phi2", "phi3", "phi4", "linf", "l2",
    "cg_iters", "cg_residual", "dissipation_slack", "supbound_slack", "fp_residual",
)
_ROW_ATTRS = (
    "n", "t", "dt", "h", "phi1", "phi2", "phi3", "phi4", "linf", "l2",
    "cg_iters", "cg_residual", "dissipation_slack", "supbound_slack", "fp_residual",
)


def write_run_csv(path: str, log: RunLog) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_COLUMNS)
        for row in log.rows:
            writer.writerow([getattr(row, c) for c in _ROW_ATTRS])


def read_run_csv(path: str) -> list[RunRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RUN_COLUMNS:
            raise StorageError(f"{path}: unexpected columns {header}")
        for rec in reader:
            kw = dict(zip(_ROW_ATTRS, rec))
            rows.append(RunRow(
                n=int(kw["n"]),
                t=float(kw["t"]),
                dt=float(kw["dt"]),
                h=float(kw["h"]),
                phi1=float(kw["phi1"]),
                phi2=float(kw["phi2"]),
                phi3=float(kw["phi3"]),
                phi4=float(kw["phi4"]),
                linf=float(kw["linf"]),
                l2=float(kw["l2"]),
                cg_iters=int(kw["cg_iters"]),
                cg_residual=float(kw["cg_residual"]),
                dissipation_slack=float(kw["dissipation_slack"]),
                supbound_slack=float(kw["supbound_slack"]),
                fp_residual=float(kw["fp_residual"]),
            ))
    return rows


def write_csv(path: str, header: tuple[str, ...], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_vtk(path: str, field: Field, name: str = "u") -> None:
    """Legacy ASCII STRUCTURED_POINTS dump for quick inspection."""
    g = field.grid
    flat = _x_fastest(field.values).ravel()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("lattice field\nASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {g.nx + 1} {g.ny + 1} {g.nz + 1}\n")
        fh.write("ORIGIN 0 0 0\n")
        fh.write(f"SPACING {g.dx!r} {g.dy!r} {g.dz!r}\n")
        fh.write(f"POINT_DATA {g.node_count}\n")
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in flat:
            fh.write(f"{float(v)!r}\n")
