"""Feature-vector CSV files: a ``dim: d`` header line, then one comma-separated vector per row."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ..exceptions import DimensionError, ValidationError


def parse_features(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dim:"):
        raise ValidationError("feature file must start with a 'dim: d' header")
    try:
        d = int(lines[0].split(":", 1)[1])
    except ValueError as exc:
        raise ValidationError(f"bad header {lines[0]!r}") from exc
    rows = []
    for n, row in enumerate(csv.reader(lines[1:]), start=2):
        if len(row) != d:
            raise DimensionError(f"line {n}: expected {d} values, got {len(row)}")
        rows.append([float(v) for v in row])
    return np.array(rows, dtype=np.float64).reshape(len(rows), d)


def format_features(feats) -> str:
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    buf = io.StringIO()
    buf.write(f"dim: {feats.shape[1]}\n")
    w = csv.writer(buf, lineterminator="\n")
    for row in feats:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def read_features(path) -> np.ndarray:
    return parse_features(Path(path).read_text(encoding="utf-8"))


def write_features(path, feats) -> None:
    Path(path).write_text(format_features(feats), encoding="utf-8")
