"""Plain-text field, cut and summary files.

A field file starts with ``#`` metadata lines, then one header row of column
names, then one row per cell::

    # mixmom-field v1
    # closure = mk1
    # basis = mixed1
    # nx = 50
    ...
    x y u00 ux_p ux_m uy_p uy_m
    ...
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .closures import make_closure

FIELD_MAGIC = "# mixmom-field v1"
SUMMARY_KEYS = ("mass_initial", "mass_final", "min_u00", "limiter_activations", "symmetry_error", "wall_seconds")


class FieldFormatError(ValueError):
    pass


@dataclass
class FieldData:
    closure: str
    nx: int
    ny: int
    t: float
    bounds: tuple
    columns: list
    data: np.ndarray  # (rows, columns)

    @property
    def moments(self):
        """Moment array ``(nx, ny, n)``; rows are stored with y varying fastest."""
        return self.data[:, 2:].reshape(self.nx, self.ny, -1)


def _meta_lines(meta: dict):
    return [FIELD_MAGIC] + [f"# {k} = {v}" for k, v in meta.items()]


def write_table(path, meta: dict, columns, rows) -> None:
    buf = io.StringIO()
    buf.write("\n".join(_meta_lines(meta)) + "\n")
    buf.write(" ".join(columns) + "\n")
    np.savetxt(buf, np.asarray(rows, dtype=float), fmt="%.17g")
    Path(path).write_text(buf.getvalue())


def write_field(path, grid, U, closure, t: float) -> None:
    X, Y = grid.centers()
    rows = np.column_stack([X.ravel(), Y.ravel(), np.asarray(U).reshape(-1, U.shape[-1])])
    meta = {"closure": closure.name, "basis": closure.basis, "nx": grid.nx, "ny": grid.ny, "t": repr(float(t)),
            "bounds": f"{grid.x_min!r} {grid.x_max!r} {grid.y_min!r} {grid.y_max!r}"}
    write_table(path, meta, ["x", "y", *closure.labels], rows)


def write_cut(path, s, x, y, values, labels, meta: dict) -> None:
    rows = np.column_stack([s, x, y, values])
    write_table(path, meta, ["s", "x", "y", *labels], rows)


def read_field(path) -> FieldData:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise FieldFormatError(f"{path}: empty file")
    if lines[0].strip() != FIELD_MAGIC:
        raise FieldFormatError(f"{path}: missing '{FIELD_MAGIC}' header")
    meta = {}
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        body = lines[k][1:]
        if "=" in body:
            key, val = body.split("=", 1)
            meta[key.strip()] = val.strip()
        k += 1
    if k >= len(lines):
        raise FieldFormatError(f"{path}: no column header")
    columns = lines[k].split()
    try:
        closure = meta["closure"]
        nx, ny = int(meta["nx"]), int(meta["ny"])
        t = float(meta.get("t", "nan"))
        bounds = tuple(float(v) for v in meta["bounds"].split())
    except (KeyError, ValueError) as exc:
        raise FieldFormatError(f"{path}: bad metadata ({exc})") from exc
    try:
        data = np.loadtxt(io.StringIO("\n".join(lines[k + 1:])), ndmin=2)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: bad data rows ({exc})") from exc
    if data.shape != (nx * ny, len(columns)):
        raise FieldFormatError(f"{path}: expected {nx * ny} rows of {len(columns)} values, got {data.shape}")
    return FieldData(closure, nx, ny, t, bounds, columns, data)


def check_realizability(path, slack: float = 1e-10, worst: int = 5) -> dict:
    """Audit every cell of a field file; returns counts and the worst cells."""
    f = read_field(path)
    c = make_closure(f.closure)
    U = f.data[:, 2:]
    if U.shape[1] != c.ncomp:
        raise FieldFormatError(f"{path}: {U.shape[1]} moment columns for closure {f.closure}")
    ok = c.realizable(U, slack) & (c.mass(U) > 0)
    margin = _margin(c, U)
    order = np.argsort(margin)[:worst]
    return {
        "cells": int(len(U)),
        "violations": int(np.count_nonzero(~ok)),
        "worst": [(int(i // f.ny), int(i % f.ny), float(margin[i])) for i in order],
    }


def _margin(closure, U):
    """Signed distance-like margin to the realizable boundary (negative means violated)."""
    if closure.name == "qk1":
        return np.min([_margin_quarter(U[:, 3 * k:3 * k + 3], kind.quadrant.signs)
                       for k, kind in enumerate(closure._kinds)], axis=0)
    u0 = U[:, 0]
    if closure.ncomp == 3:
        return np.minimum(u0, u0 - np.hypot(U[:, 1], U[:, 2]))
    return np.min(np.stack([u0, u0 - np.hypot(U[:, 1] - U[:, 2], U[:, 3] - U[:, 4]),
                            U[:, 1], -U[:, 2], U[:, 3], -U[:, 4]]), axis=0)


def _margin_quarter(V, signs):
    sx, sy = signs
    return np.min(np.stack([V[:, 0], V[:, 0] - np.hypot(V[:, 1], V[:, 2]), sx * V[:, 1], sy * V[:, 2]]), axis=0)


def write_summary(path, record: dict) -> None:
    lines = [f"{k} = {record[k]!r}" if isinstance(record[k], float) else f"{k} = {record[k]}" for k in record]
    Path(path).write_text("\n".join(lines) + "\n")


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line and not line.startswith("#"):
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
