"""Deterministic CSV export."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "{:.6f}"


class ExportError(ArithmeticError):
    """A non-finite value reached an export."""


def _cell(v):
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ExportError(f"non-finite value {v!r} in export")
        out = FLOAT_FMT.format(float(v))
        # avoid a signed zero differing between runs
        return "0.000000" if out == "-0.000000" else out
    return str(v)


def write_csv(path, header, rows, units: str) -> Path:
    """Write ``rows`` under a ``# units:`` comment line and a header row.

    Floats use fixed six-decimal formatting; NaN or infinity raises
    :class:`ExportError` before anything is written.
    """
    path = Path(path)
    body = [[_cell(v) for v in row] for row in rows]
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# units: {units}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
    return path


def read_csv(path):
    """Return ``(units, header, rows)`` of a file written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    units = lines[0].removeprefix("# units: ")
    reader = csv.reader(lines[1:])
    header = next(reader)
    return units, header, [row for row in reader]
