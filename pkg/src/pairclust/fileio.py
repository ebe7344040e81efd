"""File formats shared by the CLI commands.

All formats are plain text, header-free and diff-friendly: features.csv has
one comma-separated sample per row, labels.txt one 0-based integer per
line, annotations.txt lines of "i j t" with t in {1, -1} (1 = must-link,
duplicates allowed and counted), params.csv K rows of D means followed by
one row of K variances.  Floats are written with shortest round-trip
precision (up to 17 significant digits).  Writes are whole-file atomic.
"""

from __future__ import annotations

import os

import numpy as np

from .core import AnnotationGraphs
from .datagen import graphs_from_draws


class FileFormatError(Exception):
    """Malformed input file; the message carries path and line number."""


def atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(text)
    os.replace(tmp, path)


def _float_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def _lines(path: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            content = handle.read()
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc.strerror or exc}") from exc
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def write_features(path: str, samples: np.ndarray) -> None:
    atomic_write_text(path, "".join(_float_row(row) + "\n" for row in samples))


def read_features(path: str) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(_lines(path), 1):
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise FileFormatError(
                f"{path}:{lineno}: expected {width} columns, found {len(cells)}"
            )
        try:
            rows.append([float(cell) for cell in cells])
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: invalid float") from None
    if not rows:
        raise FileFormatError(f"{path}: no samples found")
    arr = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise FileFormatError(f"{path}: non-finite feature value")
    return arr


def write_labels(path: str, labels) -> None:
    atomic_write_text(path, "".join(f"{int(v)}\n" for v in labels))


def read_labels(path: str) -> np.ndarray:
    values = []
    for lineno, line in enumerate(_lines(path), 1):
        try:
            values.append(int(line.strip()))
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: invalid integer label") from None
    if not values:
        raise FileFormatError(f"{path}: no labels found")
    return np.array(values, dtype=np.int64)


def write_annotations(path: str, draws: np.ndarray) -> None:
    atomic_write_text(
        path, "".join(f"{int(i)} {int(j)} {int(t)}\n" for i, j, t in draws)
    )


def read_annotations(path: str, n_samples: int) -> AnnotationGraphs:
    draws = []
    for lineno, line in enumerate(_lines(path), 1):
        parts = line.split()
        if len(parts) != 3:
            raise FileFormatError(f"{path}:{lineno}: expected 'i j t'")
        try:
            i, j, t = (int(p) for p in parts)
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: invalid integer") from None
        if t not in (1, -1):
            raise FileFormatError(f"{path}:{lineno}: t must be 1 or -1")
        if i == j:
            raise FileFormatError(f"{path}:{lineno}: self-annotation not allowed")
        if not (0 <= i < n_samples and 0 <= j < n_samples):
            raise FileFormatError(f"{path}:{lineno}: sample index out of range")
        draws.append((i, j, t))
    return graphs_from_draws(n_samples, np.array(draws, dtype=np.int64).reshape(-1, 3))


def write_params(path: str, means: np.ndarray, variances: np.ndarray) -> None:
    rows = [_float_row(row) + "\n" for row in means]
    rows.append(_float_row(variances) + "\n")
    atomic_write_text(path, "".join(rows))


def read_params(path: str) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    for lineno, line in enumerate(_lines(path), 1):
        try:
            rows.append([float(cell) for cell in line.split(",")])
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: invalid float") from None
    if len(rows) < 2:
        raise FileFormatError(f"{path}: expected K mean rows plus a variance row")
    k = len(rows) - 1
    variances = rows[-1]
    if len(variances) != k:
        raise FileFormatError(
            f"{path}:{len(rows)}: expected {k} variances, found {len(variances)}"
        )
    width = len(rows[0])
    for lineno, row in enumerate(rows[:-1], 1):
        if len(row) != width:
            raise FileFormatError(
                f"{path}:{lineno}: expected {width} columns, found {len(row)}"
            )
    means = np.array(rows[:-1], dtype=np.float64)
    out_vars = np.array(variances, dtype=np.float64)
    if not (np.all(np.isfinite(means)) and np.all(np.isfinite(out_vars))):
        raise FileFormatError(f"{path}: non-finite parameter value")
    return means, out_vars
