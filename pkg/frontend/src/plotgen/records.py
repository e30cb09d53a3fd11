"""Reading the simulator's CSV record files.

This package talks to the simulator only through its public file contract:
a fixed 15-column header, 17-significant-digit floats, empty cells for
values that do not apply.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXPECTED_COLUMNS = ("n", "tau", "t", "x1", "x2", "x3", "gamma", "u1", "u2",
                    "u3", "energy", "energy_rel_err", "mass_shell",
                    "discrete_energy", "noether")


class SchemaError(ValueError):
    """A record file does not match the CSV contract."""


def _check_header(header: str, path) -> None:
    cols = header.split(",")
    for i, expected in enumerate(EXPECTED_COLUMNS):
        if i >= len(cols):
            raise SchemaError(
                f"{path}: missing column {expected!r} at position {i}")
        if cols[i] != expected:
            raise SchemaError(
                f"{path}: expected column {expected!r} at position {i}, "
                f"found {cols[i]!r}")
    if len(cols) > len(EXPECTED_COLUMNS):
        raise SchemaError(
            f"{path}: unexpected extra column {cols[len(EXPECTED_COLUMNS)]!r}")


@dataclass(frozen=True)
class RecordFile:
    """Parsed record file: the numeric table plus the inferred step size."""

    path: str
    data: np.ndarray  # (rows, 15), NaN for empty cells

    @property
    def tau(self) -> np.ndarray:
        return self.data[:, 1]

    @property
    def energy_rel_err(self) -> np.ndarray:
        return self.data[:, 11]

    @property
    def h(self) -> float:
        dn = self.data[1, 0] - self.data[0, 0]
        return float((self.data[1, 1] - self.data[0, 1]) / dn)

    @property
    def tau_end(self) -> float:
        return float(self.data[-1, 1])


def read_records(path) -> RecordFile:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no record file at {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        _check_header(header, path)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(EXPECTED_COLUMNS):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(EXPECTED_COLUMNS)} "
                    f"cells, found {len(cells)}")
            rows.append([float(c) if c else math.nan for c in cells])
    if len(rows) < 2:
        raise SchemaError(f"{path}: need at least two data rows")
    return RecordFile(path=str(path), data=np.array(rows, dtype=float))


def read_convergence(path) -> np.ndarray:
    """Read a (h, error, observed_order) table; returns an (n, 3) array."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no convergence file at {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        expected = "h,error,observed_order"
        if header != expected:
            offending = header.split(",")[0] if header else "<empty>"
            raise SchemaError(f"{path}: expected header {expected!r}, "
                              f"first column reads {offending!r}")
        rows = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != 3:
                raise SchemaError(f"{path}: malformed row {line!r}")
            rows.append([float(c) if c else math.nan for c in cells])
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return np.array(rows, dtype=float)
