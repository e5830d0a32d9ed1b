"""8-bit grayscale images: validation and PGM/PNG file IO."""
from __future__ import annotations

import os

import numpy as np
from PIL import Image

from ..exceptions import DimensionError, ValidationError


def check_gray(img) -> np.ndarray:
    """Return ``img`` as a 2-D uint8 array, rejecting anything outside [0, 255]."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"grayscale image must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.number):
            raise ValidationError(f"unsupported image dtype {arr.dtype}")
        if np.any(arr < 0) or np.any(arr > 255) or np.any(arr != np.round(arr)):
            raise ValidationError("grayscale values must be integers in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def read_gray(path: str | os.PathLike) -> np.ndarray:
    """Read a PGM (P5) or PNG file; colour PNGs are converted to luminance."""
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "RGB", "RGBA", "I;16", "I"):
            raise ValidationError(f"unsupported image mode {im.mode}")
        if im.mode in ("I;16", "I"):
            raise ValidationError("only 8-bit images are supported")
        return np.array(im.convert("L"), dtype=np.uint8)


def write_gray(path: str | os.PathLike, img) -> None:
    """Write a uint8 image; the format follows the suffix (.pgm -> binary P5)."""
    Image.fromarray(check_gray(img)).save(path)


def to_uint8_minmax(x) -> np.ndarray:
    """Min-max scale any real array to uint8 for visualisation."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        return np.zeros(x.shape, dtype=np.uint8)
    return np.round((x - lo) / (hi - lo) * 255.0).astype(np.uint8)
