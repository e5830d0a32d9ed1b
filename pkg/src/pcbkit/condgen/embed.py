"""Deterministic stand-in for a frozen text encoder."""
from __future__ import annotations

import hashlib

import numpy as np

from ..exceptions import ValidationError


def text_embed_stub(prompt: str, dim: int = 64, seed: int = 0) -> np.ndarray:
    """Unit-norm Gaussian vector seeded by a SHA-256 of ``seed`` and ``prompt``."""
    if dim < 1:
        raise ValidationError("embedding dim must be >= 1")
    digest = hashlib.sha256(f"{seed}\x00{prompt}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:16], "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)
