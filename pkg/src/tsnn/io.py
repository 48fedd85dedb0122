"""CSV and JSON readers/writers plus the run manifest.

Matrix CSV: one line per row, comma separated, no header unless asked for.
An empty field or the token ``NA`` marks a missing entry. Floats are written
with ``repr`` so every finite double survives a write/read round trip.

Note that a literal ``0`` is an observed zero. Upstream exports that use 0
for "missing" must be converted before reading.
"""
from __future__ import annotations

import csv
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import ObservedMatrix
from .estimators import CompletionResult
from .inference import IntervalGrid

MISSING_TOKENS = ("", "NA")


class InputError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def read_matrix_csv(path, header: bool = False) -> ObservedMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if header and rows:
        rows = rows[1:]
    # a trailing blank line is not a row
    while rows and rows[-1] == []:
        rows.pop()
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = len(rows[0])
    values = np.full((len(rows), width), np.nan)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise InputError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
        for j, tok in enumerate(row):
            tok = tok.strip()
            if tok in MISSING_TOKENS:
                continue
            try:
                x = float(tok)
            except ValueError:
                raise InputError(f"{path}: cannot parse {tok!r} at row {i + 1}, column {j + 1}") from None
            if not math.isfinite(x):
                raise InputError(f"{path}: non-finite value {tok!r} at row {i + 1}, column {j + 1}")
            values[i, j] = x
            mask[i, j] = True
    return ObservedMatrix(values, mask)


def _write_grid(path, grid: np.ndarray, present: np.ndarray, fmt=_fmt):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row, ok in zip(grid, present):
            w.writerow([fmt(x) if o else "NA" for x, o in zip(row, ok)])


def write_matrix_csv(matrix: ObservedMatrix, path) -> None:
    _write_grid(path, matrix.values, matrix.mask)


def write_dense_csv(values: np.ndarray, path) -> None:
    """Dense array; NaN becomes NA."""
    values = np.asarray(values, dtype=float)
    _write_grid(path, values, ~np.isnan(values))


def write_mask_csv(mask: np.ndarray, path) -> None:
    mask = np.asarray(mask, dtype=bool)
    _write_grid(path, mask.astype(int), np.ones(mask.shape, dtype=bool), fmt=str)


def counts_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".counts" + (path.suffix or ".csv"))


def write_result_csv(result: CompletionResult, path) -> Path:
    """theta_hat (NA where undefined) plus a sidecar with neighbor counts. Returns the sidecar path."""
    write_dense_csv(result.theta_hat, path)
    side = counts_path(path)
    present = np.ones(result.shape, dtype=bool)
    _write_grid(side, result.neighbor_count, present, fmt=lambda x: str(int(x)))
    return side


def write_intervals_csv(result: CompletionResult, intervals: IntervalGrid, path, entries=None) -> None:
    """Long table (i, j, theta_hat, lower, upper, count); undefined values are NA."""
    if entries is None:
        entries = zip(*np.nonzero(np.ones(result.shape, dtype=bool)))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "theta_hat", "lower", "upper", "count"])
        for i, j in entries:
            cells = [result.theta_hat[i, j], intervals.lower[i, j], intervals.upper[i, j]]
            w.writerow([int(i), int(j), *("NA" if np.isnan(x) else _fmt(x) for x in cells),
                        int(result.neighbor_count[i, j])])


def write_table_csv(rows: list[dict], path, columns: Optional[list[str]] = None) -> None:
    """List of dicts as CSV; floats use repr, None becomes NA."""
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)

    def cell(x):
        if x is None:
            return "NA"
        if isinstance(x, (float, np.floating)):
            return _fmt(x)
        return str(x)

    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([cell(row.get(c)) for c in columns])


def write_rows_csv(rows: Iterable[list[str]], path) -> None:
    with Path(path).open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


@dataclass
class RunManifest:
    command: str
    argv: list
    flags: dict
    seed: Optional[int]
    version: str
    schema_version: str
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    config: Optional[dict] = None
    duration_s: float = 0.0
    python: str = field(default_factory=lambda: platform.python_version())
    started_at: float = field(default_factory=time.time)

    def write(self, path) -> None:
        write_json(asdict(self), path)

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise InputError(f"{path}: invalid JSON ({err.msg})") from None
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise InputError(f"{path}: unknown manifest key '{sorted(extra)[0]}'")
        return cls(**data)
