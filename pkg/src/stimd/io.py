"""CSV and JSON contracts for signal matrices and run records.

Signal CSV files hold one channel per row and one sample per column. An
optional first line ``# t0=<float>,dt=<float>`` carries the time grid; a
bare ``# <t0>,<dt>`` is accepted as well. Values are written with 17
significant digits, so a write-read round trip is exact for doubles.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .signals import SignalMatrix

__all__ = ["read_signal_csv", "write_signal_csv", "write_matrix_csv", "read_matrix_csv", "write_json",
           "read_json", "file_digest", "format_float"]

_HEADER = re.compile(r"^#\s*(?:t0\s*=\s*)?([^,\s]+)\s*,\s*(?:dt\s*=\s*)?([^,\s]+)\s*$")


def format_float(v: float) -> str:
    return f"{float(v):.17g}"


def _parse_header(line: str):
    m = _HEADER.match(line.strip())
    if not m:
        return None
    try:
        return float(m.group(1)), float(m.group(2))
    except ValueError:
        return None


def read_matrix_csv(path):
    """Read a numeric CSV and its optional ``# t0,dt`` header.

    Returns
    -------
    data : ndarray, shape (rows, columns)
    header : tuple of (float, float) or None

    Raises
    ------
    ShapeMismatch
        If rows have unequal lengths or the file is empty.
    ValueError
        If an entry is not a number.
    """
    header = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if header is None and not rows:
                    header = _parse_header(text)
                continue
            try:
                rows.append([float(v) for v in text.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ShapeMismatch(f"{path}: no data rows")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ShapeMismatch(f"{path}: rows have unequal lengths {sorted(width)}")
    return np.array(rows, dtype=float), header


def read_signal_csv(path, dt: float | None = None, t0: float | None = None) -> SignalMatrix:
    """Read a channels-by-samples CSV into a :class:`SignalMatrix`.

    Explicit ``dt`` and ``t0`` override the file header; without either the
    grid defaults to unit spacing from zero.
    """
    data, header = read_matrix_csv(path)
    h_t0, h_dt = header if header else (0.0, 1.0)
    return SignalMatrix(data, dt=h_dt if dt is None else dt, t0=h_t0 if t0 is None else t0)


def write_matrix_csv(path, data, header=None) -> None:
    """Write a 2D array with 17 significant digits and optional ``(t0, dt)`` header."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write(f"# t0={format_float(header[0])},dt={format_float(header[1])}\n")
        for row in data:
            fh.write(",".join(format_float(v) for v in row))
            fh.write("\n")


def write_signal_csv(path, X: SignalMatrix) -> None:
    write_matrix_csv(path, X.data, (X.t0, X.dt))


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def file_digest(path) -> str:
    """SHA-256 hex digest of a file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
