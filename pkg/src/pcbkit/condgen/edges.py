"""Edge condition: Canny edges with hysteresis thresholds scaled from Otsu's threshold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..exceptions import ValidationError
from .image import check_gray

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T

# magnitudes are rounded so that round-off in flat regions becomes 0 and
# mirror-symmetric profiles produce exact ties
MAG_DECIMALS = 6

# (drow, dcol) step along the gradient for each quantised direction
_NMS_STEPS = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}


@dataclass(frozen=True)
class EdgeConfig:
    low_factor: float = 0.5
    high_factor: float = 1.5
    sigma: float = 1.0
    radius: int = 2

    def __post_init__(self):
        if not 0 < self.low_factor < self.high_factor:
            raise ValidationError("need 0 < low_factor < high_factor")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if self.radius < 0 or int(self.radius) != self.radius:
            raise ValidationError("radius must be a non-negative integer")


def otsu_threshold(img) -> int:
    """Threshold ``t`` maximising between-class variance of {<= t} vs {> t}.

    Scores are compared as exact rationals so ties resolve to the smallest
    ``t`` reliably. Only thresholds within the histogram support are
    considered, which makes a constant image return its own value.
    """
    img = check_gray(img)
    hist = np.bincount(img.ravel(), minlength=256).tolist()
    total = sum(hist)
    total_sum = sum(i * n for i, n in enumerate(hist))
    lo, hi = int(img.min()), int(img.max())

    best_t, best_num, best_den = lo, 0, 1
    n0 = s0 = 0
    for t in range(0, hi + 1):
        n0 += hist[t]
        s0 += t * hist[t]
        if t < lo:
            continue
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        # w0*w1*(mu0-mu1)^2 up to the constant factor 1/total^2
        num = (s0 * n1 - (total_sum - s0) * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def gaussian_kernel1d(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(img, sigma: float, radius: int) -> np.ndarray:
    """Separable Gaussian blur with edge replication at the borders."""
    k = gaussian_kernel1d(sigma, radius)
    out = ndimage.correlate1d(np.asarray(img, dtype=np.float64), k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def sobel_gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Return (d/dcol, d/drow) Sobel responses with edge replication."""
    f = np.asarray(img, dtype=np.float64)
    gx = ndimage.correlate(f, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(f, SOBEL_Y, mode="nearest")
    return gx, gy


def quantize_direction(gx, gy) -> np.ndarray:
    """Map gradient angles to 4 bins (0, 45, 90, 135 deg); boundary angles go to the lower bin."""
    theta = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros(theta.shape, dtype=np.int8)
    bins[(theta > 22.5) & (theta <= 67.5)] = 1
    bins[(theta > 67.5) & (theta <= 112.5)] = 2
    bins[(theta > 112.5) & (theta <= 157.5)] = 3
    return bins


def non_max_suppression(mag, bins) -> np.ndarray:
    """Keep pixels that are local maxima across the gradient.

    A pixel must beat its backward neighbour strictly and match or beat its
    forward neighbour, so a plateau two pixels wide thins to one.
    """
    h, w = mag.shape
    padded = np.pad(mag, 1)
    rows, cols = np.mgrid[0:h, 0:w]
    keep = np.zeros(mag.shape, dtype=bool)
    for b, (dr, dc) in _NMS_STEPS.items():
        sel = bins == b
        r, c = rows[sel] + 1, cols[sel] + 1
        m = mag[sel]
        keep[sel] = (m > padded[r - dr, c - dc]) & (m >= padded[r + dr, c + dc]) & (m > 0)
    return np.where(keep, mag, 0.0)


def hysteresis(mag, low: float, high: float) -> np.ndarray:
    """Pixels above ``low`` that are 8-connected to a pixel above ``high``."""
    weak = mag > low
    strong = mag > high
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return np.zeros(mag.shape, dtype=bool)
    has_strong = np.zeros(count + 1, dtype=bool)
    has_strong[np.unique(labels[strong])] = True
    has_strong[0] = False
    return has_strong[labels]


def hysteresis_thresholds(t_otsu: float, cfg: EdgeConfig) -> tuple[float, float]:
    low = float(np.clip(cfg.low_factor * t_otsu, 0, 255))
    high = float(np.clip(cfg.high_factor * t_otsu, 0, 255))
    return low, high


def adaptive_canny(img, cfg: EdgeConfig | None = None) -> np.ndarray:
    """Binary (0/255) uint8 edge map of ``img``."""
    cfg = cfg or EdgeConfig()
    img = check_gray(img)
    low, high = hysteresis_thresholds(otsu_threshold(img), cfg)
    smooth = gaussian_smooth(img, cfg.sigma, cfg.radius)
    gx, gy = sobel_gradients(smooth)
    mag = np.round(np.hypot(gx, gy), MAG_DECIMALS)
    thin = non_max_suppression(mag, quantize_direction(gx, gy))
    return np.where(hysteresis(thin, low, high), 255, 0).astype(np.uint8)
