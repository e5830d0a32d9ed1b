"""Image-generation quality metrics: FID, the LPIPS aggregation formula, PSNR and SSIM."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..config import TOL
from ..exceptions import DimensionError, ValidationError


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = mean.size
        if cov.shape != (d, d):
            raise DimensionError(f"covariance shape {cov.shape} does not match mean dim {d}")
        scale = max(1.0, float(np.abs(cov).max()))
        if np.abs(cov - cov.T).max() > TOL.symmetric * scale:
            raise ValidationError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() < -TOL.psd_eig * scale:
            raise ValidationError("covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_features(cls, feats) -> "FeatureStats":
        """Mean and (n-1)-normalised covariance of an (n, d) feature matrix."""
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise DimensionError("need an (n, d) feature matrix with n >= 2")
        cov = np.atleast_2d(np.cov(feats, rowvar=False))
        return cls(feats.mean(axis=0), (cov + cov.T) / 2)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def trace_sqrt_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """Tr((A B)^(1/2)) via the symmetric form sqrt(A^(1/2) B A^(1/2))."""
    ra = _psd_sqrt(cov_a)
    m = ra @ cov_b @ ra
    vals = np.linalg.eigvalsh((m + m.T) / 2)
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def fid(real: FeatureStats, gen: FeatureStats) -> float:
    """Frechet distance between two Gaussian feature fits, clamped at 0."""
    if real.mean.shape != gen.mean.shape:
        raise DimensionError(f"feature dims differ: {real.mean.size} vs {gen.mean.size}")
    diff = real.mean - gen.mean
    tr = np.trace(real.cov) + np.trace(gen.cov) - 2.0 * trace_sqrt_product(real.cov, gen.cov)
    return max(float(diff @ diff + tr), 0.0)


def _unit_normalize(f: np.ndarray, eps: float = 1e-10) -> np.ndarray:
    norm = np.sqrt((f * f).sum(axis=-3, keepdims=True))
    return f / np.maximum(norm, eps)


def lpips_form(layers: Sequence, weights: Sequence[float] | None = None, *, normalize: bool = True) -> float:
    """sum_l w_l * mean over spatial sites of ||phi_l(x) - phi_l(y)||^2 over channels.

    ``layers`` holds (phi_l(x), phi_l(y)) pairs shaped (C, H, W) or (N, C, H, W);
    features are unit-normalised along channels first unless ``normalize=False``.
    Batched inputs are averaged over N.
    """
    if not layers:
        raise ValidationError("need at least one layer")
    weights = [1.0] * len(layers) if weights is None else list(weights)
    if len(weights) != len(layers):
        raise DimensionError("one weight per layer required")
    if any(w < 0 for w in weights):
        raise ValidationError("layer weights must be non-negative")
    total = 0.0
    for (fx, fy), w in zip(layers, weights):
        fx, fy = np.asarray(fx, dtype=np.float64), np.asarray(fy, dtype=np.float64)
        if fx.shape != fy.shape or fx.ndim not in (3, 4):
            raise DimensionError(f"layer features must share a (N,)C,H,W shape, got {fx.shape} and {fy.shape}")
        if normalize:
            fx, fy = _unit_normalize(fx), _unit_normalize(fy)
        d = ((fx - fy) ** 2).sum(axis=-3)
        total += w * float(d.mean())
    return total


def mse(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shapes differ: {x.shape} vs {y.shape}")
    return float(((x - y) ** 2).mean())


def psnr(x, y, max_val: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``math.inf``."""
    err = mse(x, y)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val ** 2 / err)


@dataclass(frozen=True)
class SsimConfig:
    window: int = 8
    max_val: float = 255.0
    k1: float = 0.01
    k2: float = 0.03
    gaussian: bool = False
    sigma: float = 1.5
    global_mode: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ValidationError("window must be >= 1")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValidationError("stabilising constants must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.max_val) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.max_val) ** 2


def _window_weights(cfg: SsimConfig) -> np.ndarray:
    if not cfg.gaussian:
        return np.full((cfg.window, cfg.window), 1.0 / cfg.window ** 2)
    r = np.arange(cfg.window) - (cfg.window - 1) / 2
    g = np.exp(-0.5 * (r / cfg.sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def ssim_map(x, y, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """Per-window SSIM over all stride-1 windows (population moments)."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise DimensionError(f"need two 2-D images of one shape, got {x.shape} and {y.shape}")
    if cfg.global_mode:
        wx, wy = x[None, None], y[None, None]
        k = np.full(x.shape, 1.0 / x.size)
    else:
        if x.shape[0] < cfg.window or x.shape[1] < cfg.window:
            raise ValidationError(f"image {x.shape} smaller than {cfg.window}x{cfg.window} window")
        wx = sliding_window_view(x, (cfg.window, cfg.window))
        wy = sliding_window_view(y, (cfg.window, cfg.window))
        k = _window_weights(cfg)
    mx = (wx * k).sum(axis=(-2, -1))
    my = (wy * k).sum(axis=(-2, -1))
    dx = wx - mx[..., None, None]
    dy = wy - my[..., None, None]
    vx = (dx * dx * k).sum(axis=(-2, -1))
    vy = (dy * dy * k).sum(axis=(-2, -1))
    cxy = (dx * dy * k).sum(axis=(-2, -1))
    c1, c2 = cfg.c1, cfg.c2
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(x, y, cfg: SsimConfig = SsimConfig()) -> float:
    return float(ssim_map(x, y, cfg).mean())
