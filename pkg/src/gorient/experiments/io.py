"""Reading and writing orientation lists as CSV."""
from __future__ import annotations

import csv
import io
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import NormError, ParseError
from ..symgroup import euler_to_quaternion, quaternion_to_euler

NORM_RANGE = (0.9, 1.1)
QUAT_HEADER = ("q1", "q2", "q3", "q4")
EULER_HEADER = ("phi1", "Phi", "phi2")


class OrientationFormat(str, Enum):
    QUAT_CSV = "quat"
    EULER_CSV = "euler"


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_orientations(text, fmt=OrientationFormat.QUAT_CSV) -> np.ndarray:
    """Parse CSV text into an ``(n, 4)`` array of unit quaternions.

    A first row that is not numeric is taken as a header. Quaternion rows are
    normalised; rows whose norm lies outside ``NORM_RANGE`` raise
    :class:`NormError`. Euler rows are Bunge angles in radians.
    """
    fmt = OrientationFormat(fmt)
    width = 4 if fmt is OrientationFormat.QUAT_CSV else 3
    rows, lines = [], []
    first = True
    for lineno, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        fields = [f.strip() for f in fields]
        if not any(fields):
            continue
        if first:
            first = False
            if not all(_is_number(f) for f in fields):
                continue
        if len(fields) != width:
            raise ParseError(f"expected {width} values, found {len(fields)}", line=lineno)
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-numeric value in {fields}", line=lineno) from None
        if not np.all(np.isfinite(vals)):
            raise ParseError("non-finite value", line=lineno)
        rows.append(vals)
        lines.append(lineno)
    if not rows:
        raise ParseError("no orientations found")
    arr = np.array(rows, dtype=float)
    if fmt is OrientationFormat.EULER_CSV:
        return euler_to_quaternion(arr[:, 0], arr[:, 1], arr[:, 2])
    norms = np.linalg.norm(arr, axis=1)
    bad = (norms < NORM_RANGE[0]) | (norms > NORM_RANGE[1])
    if np.any(bad):
        bad_lines = [lines[i] for i in np.flatnonzero(bad)]
        shown = ", ".join(map(str, bad_lines[:10])) + (" ..." if len(bad_lines) > 10 else "")
        raise NormError(f"{len(bad_lines)} row(s) with norm outside {NORM_RANGE}: lines {shown}",
                        rows=bad_lines)
    return arr / norms[:, None]


def ingest_orientations(path, fmt=OrientationFormat.QUAT_CSV) -> np.ndarray:
    return parse_orientations(Path(path).read_text(), fmt)


def format_orientations(x, fmt=OrientationFormat.QUAT_CSV, digits=17) -> str:
    fmt = OrientationFormat(fmt)
    x = np.asarray(x, dtype=float)
    if fmt is OrientationFormat.QUAT_CSV:
        header, table = QUAT_HEADER, x
    else:
        header, table = EULER_HEADER, np.stack(quaternion_to_euler(x), axis=-1)
    lines = [",".join(header)]
    lines += [",".join(f"{v:.{digits}g}" for v in row) for row in table]
    return "\n".join(lines) + "\n"


def write_orientations(path, x, fmt=OrientationFormat.QUAT_CSV, digits=17):
    Path(path).write_text(format_orientations(x, fmt, digits))
