"""Deterministic CSV output with a ``#``-prefixed parameter header.

Numbers are written in scientific notation with 17 significant digits so
doubles round-trip exactly; header lines are ``# key = value``.
"""
from __future__ import annotations

import io
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

NUMBER_FORMAT = "{:.16e}"


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return NUMBER_FORMAT.format(x)


def complex_columns(prefix: str) -> list[str]:
    """``Re``/``Im`` column names for the four entries of a 2x2 matrix."""
    return [f"{part}_{prefix}{i}{j}" for i in (1, 2) for j in (1, 2) for part in ("re", "im")]


def flatten_complex(m) -> np.ndarray:
    """``(N, 2, 2)`` complex to ``(N, 8)`` real in :func:`complex_columns` order."""
    m = np.asarray(m, complex).reshape(len(m), 4)
    return np.stack([m.real, m.imag], axis=-1).reshape(len(m), 8)


def write_table(out: TextIO, header: Mapping[str, object], columns: Sequence[str],
                rows: Iterable[Sequence], footer: Mapping[str, object] | None = None):
    for key, val in header.items():
        out.write(f"# {key} = {val}\n")
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(fmt(x) for x in row) + "\n")
    for key, val in (footer or {}).items():
        out.write(f"# {key} = {val}\n")


def render_table(header, columns, rows, footer=None) -> str:
    buf = io.StringIO()
    write_table(buf, header, columns, rows, footer)
    return buf.getvalue()


def read_header(text: str) -> dict[str, str]:
    """All ``# key = value`` lines (header and footer) as strings."""
    out = {}
    for line in text.splitlines():
        if line.startswith("#") and "=" in line:
            key, val = line[1:].split("=", 1)
            out[key.strip()] = val.strip()
    return out


def read_table(text: str) -> tuple[list[str], np.ndarray]:
    """Column names and the numeric body (non-numeric cells become NaN)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        return [], np.zeros((0, 0))
    columns = lines[0].split(",")

    def num(cell):
        try:
            return float(cell)
        except ValueError:
            return np.nan

    body = np.array([[num(c) for c in ln.split(",")] for ln in lines[1:]], dtype=float)
    return columns, body.reshape(-1, len(columns))
