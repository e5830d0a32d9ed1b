"""Depth condition providers."""
from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .edges import gaussian_smooth
from .image import check_gray


@runtime_checkable
class DepthProvider(Protocol):
    def __call__(self, img: np.ndarray) -> np.ndarray:
        """Map an (H, W) uint8 image to a (1, 1, H, W) float64 map in [0, 1]."""
        ...


class BlurDepthStub:
    """Inverted, min-max normalised Gaussian blur of the intensity.

    Bright copper maps towards 0 (near) and dark substrate towards 1 (far).
    A constant image has no structure and comes out uniformly far.
    """

    def __init__(self, sigma: float = 2.0, radius: int | None = None):
        self.sigma = sigma
        self.radius = int(np.ceil(3 * sigma)) if radius is None else radius

    def __call__(self, img) -> np.ndarray:
        img = check_gray(img)
        blur = gaussian_smooth(img, self.sigma, self.radius)
        lo, hi = blur.min(), blur.max()
        norm = (blur - lo) / (hi - lo) if hi - lo > 1e-9 else np.zeros_like(blur)
        return (1.0 - norm)[None, None]
