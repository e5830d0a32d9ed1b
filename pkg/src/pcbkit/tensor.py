"""Tensor validation helpers and the flat text serialization format.

Tensors are plain ``numpy.ndarray`` objects in float64. The text format is::

    shape: d0 d1 ...
    v0
    v1
    ...

with values in row-major order, one per line, written with ``repr`` so that
a round trip is lossless.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, NumericError, ValidationError


def as_tensor(x, *, allow_nonfinite: bool = False, copy: bool = False) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=copy) if copy else np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise DimensionError("tensors need at least one dimension")
    if not allow_nonfinite and not np.all(np.isfinite(arr)):
        raise NumericError("tensor contains NaN or Inf")
    return arr


def check_nchw(x, name: str = "x") -> np.ndarray:
    arr = as_tensor(x)
    if arr.ndim != 4:
        raise DimensionError(f"{name} must be (N, C, H, W), got shape {arr.shape}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what} have mismatched shapes {a.shape} and {b.shape}")


def format_tensor(x) -> str:
    arr = as_tensor(x, allow_nonfinite=True)
    lines = ["shape: " + " ".join(str(d) for d in arr.shape)]
    lines.extend(repr(float(v)) for v in arr.ravel(order="C"))
    return "\n".join(lines) + "\n"


def parse_tensor(text: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("shape:"):
        raise ValidationError("tensor text must start with a 'shape:' line")
    try:
        shape = tuple(int(tok) for tok in lines[0][len("shape:"):].split())
        values = [float(tok) for line in lines[1:] for tok in line.split()]
    except ValueError as exc:
        raise ValidationError(f"malformed tensor text: {exc}") from exc
    if not shape or any(d <= 0 for d in shape):
        raise ValidationError(f"invalid tensor shape {shape}")
    if int(np.prod(shape)) != len(values):
        raise ValidationError(f"shape {shape} needs {int(np.prod(shape))} values, got {len(values)}")
    return np.array(values, dtype=np.float64).reshape(shape)


def save_tensor(path: str | os.PathLike, x) -> None:
    Path(path).write_text(format_tensor(x), encoding="utf-8")


def load_tensor(path: str | os.PathLike) -> np.ndarray:
    return parse_tensor(Path(path).read_text(encoding="utf-8"))
