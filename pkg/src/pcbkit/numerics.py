"""Deterministic float64 forward kernels shared by every block.

All feature maps use the (N, C, H, W) layout and zero padding. There is no
autodiff; the few hand-written backward passes needed by gradient checks live
next to their forward functions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DimensionError, NumericError, ValidationError
from .tensor import as_tensor, check_nchw

INIT_RANGE = 0.05


@dataclass
class ConvParams:
    weight: np.ndarray  # (out_c, in_c // groups, kh, kw)
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        self.weight = as_tensor(self.weight)
        if self.weight.ndim != 4:
            raise DimensionError(f"conv weight must be 4-D, got {self.weight.shape}")
        if self.bias is not None:
            self.bias = as_tensor(self.bias)
            if self.bias.shape != (self.weight.shape[0],):
                raise DimensionError(f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} outputs")
        if self.groups < 1 or self.stride < 1 or self.padding < 0:
            raise ValidationError("groups and stride must be >= 1 and padding >= 0")
        if self.weight.shape[0] % self.groups:
            raise DimensionError(f"out channels {self.weight.shape[0]} not divisible by groups={self.groups}")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]


@dataclass
class AttentionParams:
    proj_q: ConvParams
    proj_k: ConvParams
    proj_v: ConvParams
    heads: int = 1
    head_scale: Optional[np.ndarray] = None  # per-head logit divisor; None -> 1/sqrt(d_k)

    def __post_init__(self):
        for name in ("proj_q", "proj_k", "proj_v"):
            p = getattr(self, name)
            if p.kernel_size != (1, 1):
                raise DimensionError(f"{name} must be a 1x1 projection")
            if p.out_channels % self.heads:
                raise DimensionError(f"{name} outputs {p.out_channels} not divisible by heads={self.heads}")
        if self.proj_q.out_channels != self.proj_k.out_channels:
            raise DimensionError("query and key projections must share their width")
        if self.head_scale is not None:
            self.head_scale = as_tensor(self.head_scale)
            if self.head_scale.shape != (self.heads,):
                raise DimensionError(f"head_scale must have shape ({self.heads},)")
            if np.any(self.head_scale <= 0):
                raise ValidationError("head_scale must be strictly positive")


# ---------------------------------------------------------------- initialisers

def init_conv(rng: np.random.Generator, out_c: int, in_c: int, kernel: int = 3, *,
              stride: int = 1, padding: Optional[int] = None, groups: int = 1,
              bias: bool = True, zero: bool = False) -> ConvParams:
    """Seeded uniform init in [-0.05, 0.05]; ``zero=True`` gives an all-zero conv."""
    if in_c % groups or out_c % groups:
        raise DimensionError(f"channels ({in_c}->{out_c}) not divisible by groups={groups}")
    shape = (out_c, in_c // groups, kernel, kernel)
    if zero:
        w = np.zeros(shape)
        b = np.zeros(out_c) if bias else None
    else:
        w = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
        b = rng.uniform(-INIT_RANGE, INIT_RANGE, size=out_c) if bias else None
    return ConvParams(w, b, stride=stride, padding=kernel // 2 if padding is None else padding, groups=groups)


def identity_conv(channels: int) -> ConvParams:
    """1x1 conv mapping every channel to itself."""
    w = np.zeros((channels, channels, 1, 1))
    w[np.arange(channels), np.arange(channels), 0, 0] = 1.0
    return ConvParams(w, np.zeros(channels))


def init_attention(rng: np.random.Generator, qk_in: int, v_in: int, qk_dim: int, v_dim: int,
                   heads: int, *, head_scale: bool = False) -> AttentionParams:
    return AttentionParams(
        proj_q=init_conv(rng, qk_dim, qk_in, 1),
        proj_k=init_conv(rng, qk_dim, qk_in, 1),
        proj_v=init_conv(rng, v_dim, v_in, 1),
        heads=heads,
        head_scale=np.ones(heads) if head_scale else None,
    )


# ---------------------------------------------------------------- convolution

def conv2d(x, p: ConvParams) -> np.ndarray:
    """2-D cross-correlation with zero padding, stride and channel groups."""
    x = check_nchw(x)
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise DimensionError(f"input has {c} channels, conv expects {p.in_channels}")
    kh, kw = p.kernel_size
    if p.padding:
        x = np.pad(x, ((0, 0), (0, 0), (p.padding, p.padding), (p.padding, p.padding)))
    if x.shape[2] < kh or x.shape[3] < kw:
        raise DimensionError(f"padded input {x.shape[2:]} smaller than kernel {(kh, kw)}")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::p.stride, ::p.stride]
    ho, wo = win.shape[2], win.shape[3]
    g = p.groups
    win = win.reshape(n, g, c // g, ho, wo, kh, kw)
    wt = p.weight.reshape(g, p.out_channels // g, c // g, kh, kw)
    out = np.einsum("ngchwij,gocij->ngohw", win, wt, optimize=True).reshape(n, p.out_channels, ho, wo)
    if p.bias is not None:
        out = out + p.bias[None, :, None, None]
    return out


def conv2d_input_grad(grad_out, p: ConvParams, input_shape) -> np.ndarray:
    """Gradient of ``sum(grad_out * conv2d(x, p))`` with respect to ``x``."""
    grad_out = check_nchw(grad_out)
    n, c, h, w = input_shape
    kh, kw = p.kernel_size
    g = p.groups
    go = grad_out.reshape(n, g, p.out_channels // g, grad_out.shape[2], grad_out.shape[3])
    wt = p.weight.reshape(g, p.out_channels // g, c // g, kh, kw)
    # contribution of every output position to its input window
    cols = np.einsum("ngohw,gocij->ngchwij", go, wt, optimize=True)
    hp, wp = h + 2 * p.padding, w + 2 * p.padding
    gx = np.zeros((n, g, c // g, hp, wp))
    for i in range(kh):
        for j in range(kw):
            gx[:, :, :, i:i + p.stride * cols.shape[3]:p.stride, j:j + p.stride * cols.shape[4]:p.stride] += cols[..., i, j]
    gx = gx.reshape(n, c, hp, wp)
    if p.padding:
        gx = gx[:, :, p.padding:p.padding + h, p.padding:p.padding + w]
    return gx


# ---------------------------------------------------------------- activations

def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x * sigmoid(x)


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax(x, axis: int = -1) -> np.ndarray:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for {x.ndim}-D input")
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------- normalisation

def group_norm(x, num_groups: int, eps: float = 1e-5) -> np.ndarray:
    """GroupNorm without affine parameters."""
    x = check_nchw(x)
    n, c, h, w = x.shape
    if num_groups < 1 or c % num_groups:
        raise DimensionError(f"{c} channels not divisible into {num_groups} groups")
    if eps <= 0:
        raise ValidationError("eps must be positive")
    xg = x.reshape(n, num_groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    d = xg - mu
    var = (d * d).mean(axis=2, keepdims=True)
    return (d / np.sqrt(var + eps)).reshape(x.shape)


def group_norm_grad(x, grad_out, num_groups: int, eps: float = 1e-5) -> np.ndarray:
    """Gradient of ``sum(grad_out * group_norm(x))`` with respect to ``x``."""
    x = check_nchw(x)
    n, c, h, w = x.shape
    xg = x.reshape(n, num_groups, -1)
    g = np.asarray(grad_out, dtype=np.float64).reshape(n, num_groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    d = xg - mu
    inv = 1.0 / np.sqrt((d * d).mean(axis=2, keepdims=True) + eps)
    y = d * inv
    gx = inv * (g - g.mean(axis=2, keepdims=True) - y * (g * y).mean(axis=2, keepdims=True))
    return gx.reshape(x.shape)


def batch_norm_inference(x, mean=None, var=None, gamma=None, beta=None, eps: float = 1e-5) -> np.ndarray:
    """BatchNorm with frozen statistics; omitted stats default to mean 0, var 1, identity affine."""
    x = check_nchw(x)
    c = x.shape[1]
    mean = np.zeros(c) if mean is None else np.asarray(mean, dtype=np.float64)
    var = np.ones(c) if var is None else np.asarray(var, dtype=np.float64)
    gamma = np.ones(c) if gamma is None else np.asarray(gamma, dtype=np.float64)
    beta = np.zeros(c) if beta is None else np.asarray(beta, dtype=np.float64)
    scale = gamma / np.sqrt(var + eps)
    return (x - mean[None, :, None, None]) * scale[None, :, None, None] + beta[None, :, None, None]


# ---------------------------------------------------------------- attention

def scaled_dot_attention(q, k, v, scale: Optional[float] = None) -> np.ndarray:
    """softmax(q @ k^T * scale) @ v over the last two axes; scale defaults to 1/sqrt(d_k)."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query dim {q.shape[-1]} != key dim {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"{k.shape[-2]} keys but {v.shape[-2]} values")
    if scale is None:
        scale = 1.0 / np.sqrt(q.shape[-1])
    logits = np.matmul(q, np.swapaxes(k, -1, -2)) * scale
    return np.matmul(softmax(logits, axis=-1), v)


def _to_heads(t: np.ndarray, heads: int) -> np.ndarray:
    n, c, h, w = t.shape
    # (N, heads, tokens, c // heads)
    return t.reshape(n, heads, c // heads, h * w).transpose(0, 1, 3, 2)


def multihead_spatial_attention(src_qk, src_v, p: AttentionParams) -> np.ndarray:
    """Attention with spatial positions as tokens.

    Q and K are projected from ``src_qk``, V from ``src_v``. With
    ``p.head_scale`` set, head ``i`` divides its logits by ``head_scale[i]``;
    otherwise the usual 1/sqrt(d_k) scaling is used.
    """
    src_qk, src_v = check_nchw(src_qk), check_nchw(src_v)
    if src_qk.shape[2:] != src_v.shape[2:] or src_qk.shape[0] != src_v.shape[0]:
        raise DimensionError("query/key and value sources must share batch and spatial dims")
    n, _, h, w = src_v.shape
    q = _to_heads(conv2d(src_qk, p.proj_q), p.heads)
    k = _to_heads(conv2d(src_qk, p.proj_k), p.heads)
    v = _to_heads(conv2d(src_v, p.proj_v), p.heads)
    if p.head_scale is None:
        out = scaled_dot_attention(q, k, v)
    else:
        out = np.stack([scaled_dot_attention(q[:, i], k[:, i], v[:, i], 1.0 / p.head_scale[i])
                        for i in range(p.heads)], axis=1)
    dv = out.shape[-1]
    return out.transpose(0, 1, 3, 2).reshape(n, p.heads * dv, h, w)


# ---------------------------------------------------------------- rearrangements

def channel_shuffle(x, groups: int) -> np.ndarray:
    x = check_nchw(x)
    n, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise DimensionError(f"{c} channels not divisible into {groups} groups")
    return x.reshape(n, groups, c // groups, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w)


def space_to_depth(x, block: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*b*b, H/b, W/b).

    Output channel ``(dy*b + dx)*C + c`` holds ``x[:, c, dy::b, dx::b]``:
    block offsets in raster order are the major index, source channel minor.
    """
    x = check_nchw(x)
    n, c, h, w = x.shape
    if block < 1 or h % block or w % block:
        raise DimensionError(f"spatial dims {(h, w)} not divisible by block {block}")
    t = x.reshape(n, c, h // block, block, w // block, block)
    return t.transpose(0, 3, 5, 1, 2, 4).reshape(n, block * block * c, h // block, w // block)


def depth_to_space(x, block: int) -> np.ndarray:
    """Exact inverse of :func:`space_to_depth`."""
    x = check_nchw(x)
    n, cb, h, w = x.shape
    if block < 1 or cb % (block * block):
        raise DimensionError(f"{cb} channels not divisible by block^2={block * block}")
    c = cb // (block * block)
    t = x.reshape(n, block, block, c, h, w)
    return t.transpose(0, 3, 4, 1, 5, 2).reshape(n, c, h * block, w * block)


def _bilinear_axis(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(x, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize, align_corners=False, edge-clamped source coordinates."""
    x = check_nchw(x)
    if out_h < 1 or out_w < 1:
        raise ValidationError("output size must be positive")
    h, w = x.shape[2:]
    if (h, w) == (out_h, out_w):
        return x.copy()
    y0, y1, fy = _bilinear_axis(h, out_h)
    x0, x1, fx = _bilinear_axis(w, out_w)
    rows = x[:, :, y0, :] * (1 - fy)[None, None, :, None] + x[:, :, y1, :] * fy[None, None, :, None]
    return rows[:, :, :, x0] * (1 - fx) + rows[:, :, :, x1] * fx


# ---------------------------------------------------------------- gradient check

def grad_check(f: Callable[[np.ndarray], float], grad_f: Callable[[np.ndarray], np.ndarray],
               x, h: float = 1e-5) -> float:
    """Max elementwise relative error between ``grad_f(x)`` and central differences of ``f``."""
    if not 1e-6 <= h <= 1e-3:
        raise ValidationError("step h must lie in [1e-6, 1e-3]")
    x = as_tensor(x, copy=True)
    analytic = np.asarray(grad_f(x.copy()), dtype=np.float64)
    if analytic.shape != x.shape:
        raise DimensionError(f"gradient shape {analytic.shape} != input shape {x.shape}")
    numeric = np.empty_like(x)
    flat, nflat = x.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at element {i}")
        nflat[i] = (fp - fm) / (2 * h)
    rel = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(rel.max())
