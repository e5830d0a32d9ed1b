"""Gated cross-level fusion and its dual-path (local + global) attention gate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import DimensionError
from ..numerics import (
    AttentionParams,
    ConvParams,
    channel_shuffle,
    conv2d,
    conv2d_input_grad,
    init_attention,
    init_conv,
    multihead_spatial_attention,
    sigmoid,
)
from ..tensor import check_nchw, check_same_shape

# float64 sigmoid rounds to exactly 0 or 1 for |logit| beyond ~37; keep the gate open
GATE_MIN = np.nextafter(0.0, 1.0)
GATE_MAX = np.nextafter(1.0, 0.0)


@dataclass
class DpcaParams:
    qkv_proj: ConvParams     # 1x1, input -> shared tensor
    local_dw: ConvParams     # 3x3 depthwise
    local_group: ConvParams  # grouped conv after the shuffle
    global_attn: AttentionParams  # head_scale holds the learnable per-head divisor
    global_proj: ConvParams  # 1x1 after attention
    gate_conv: ConvParams    # 7x7 grouped, logits for the gate
    shuffle_groups: int = 4

    def __post_init__(self):
        cq = self.qkv_proj.out_channels
        if self.local_dw.groups != cq or self.local_dw.out_channels != cq:
            raise DimensionError("local DWConv must be depthwise over the shared tensor")
        if self.local_group.in_channels != cq or self.local_group.out_channels != cq:
            raise DimensionError("local grouped conv must keep the shared width")
        if self.global_attn.head_scale is None:
            raise DimensionError("global attention needs a per-head scale vector")
        if self.global_proj.out_channels != cq:
            raise DimensionError("global projection must return to the shared width")
        if self.gate_conv.in_channels != 2 * cq + self.qkv_proj.in_channels:
            raise DimensionError("gate conv input must cover [local, global, input]")

    @property
    def in_channels(self) -> int:
        return self.qkv_proj.in_channels

    @property
    def gate_channels(self) -> int:
        return self.gate_conv.out_channels


def init_dpca(in_channels: int, gate_channels: int, *, shared_channels: int | None = None,
              heads: int = 2, groups: int = 4, zero_gate: bool = False, seed: int = 0) -> DpcaParams:
    rng = np.random.default_rng(seed)
    cq = in_channels if shared_channels is None else shared_channels
    return DpcaParams(
        qkv_proj=init_conv(rng, cq, in_channels, 1),
        local_dw=init_conv(rng, cq, cq, 3, groups=cq),
        local_group=init_conv(rng, cq, cq, 3, groups=groups),
        global_attn=init_attention(rng, cq, cq, cq, cq, heads, head_scale=True),
        global_proj=init_conv(rng, cq, cq, 1),
        gate_conv=init_conv(rng, gate_channels, 2 * cq + in_channels, 7, groups=groups, zero=zero_gate),
        shuffle_groups=groups,
    )


def dpca_stages(x, p: DpcaParams) -> dict:
    x = check_nchw(x)
    if x.shape[1] != p.in_channels:
        raise DimensionError(f"gate input has {x.shape[1]} channels, expected {p.in_channels}")
    qkv = conv2d(x, p.qkv_proj)
    loc = conv2d(channel_shuffle(conv2d(qkv, p.local_dw), p.shuffle_groups), p.local_group)
    glo = conv2d(multihead_spatial_attention(qkv, qkv, p.global_attn), p.global_proj) + qkv
    logits = conv2d(channel_shuffle(np.concatenate([loc, glo, x], axis=1), p.shuffle_groups), p.gate_conv)
    gate = np.clip(sigmoid(logits), GATE_MIN, GATE_MAX)
    return {"qkv": qkv, "loc": loc, "glo": glo, "logits": logits, "gate": gate}


def dpca_gate(x, p: DpcaParams) -> np.ndarray:
    """Pixel-wise gate in (0, 1) with ``p.gate_channels`` channels."""
    return dpca_stages(x, p)["gate"]


def gated_mix(fl, fh, w) -> np.ndarray:
    """w*fl + (1-w)*fh + (fl + fh); where fl == fh the convex part is taken as fl exactly."""
    mix = np.where(fl == fh, fl, w * fl + (1.0 - w) * fh)
    return mix + (fl + fh)


@dataclass
class ClcfParams:
    dpca: DpcaParams
    proj: ConvParams  # 1x1

    @property
    def channels(self) -> int:
        return self.proj.out_channels


def init_clcf(channels: int, *, heads: int = 2, groups: int = 4, zero_gate: bool = False,
              seed: int = 0) -> ClcfParams:
    rng = np.random.default_rng(seed)
    dpca = init_dpca(2 * channels, channels, heads=heads, groups=groups, zero_gate=zero_gate,
                     seed=int(rng.integers(2 ** 31)))
    return ClcfParams(dpca, init_conv(rng, channels, channels, 1))


def clcf_stages(fl, fh, p: ClcfParams) -> dict:
    fl, fh = check_nchw(fl, "fl"), check_nchw(fh, "fh")
    check_same_shape(fl, fh, "low- and high-level features")
    w = dpca_gate(np.concatenate([fl, fh], axis=1), p.dpca)
    if w.shape != fl.shape:
        raise DimensionError(f"gate shape {w.shape} does not match features {fl.shape}")
    mixed = gated_mix(fl, fh, w)
    return {"gate": w, "proj_input": mixed, "fused": conv2d(mixed, p.proj)}


def clcf_fuse(fl, fh, p: ClcfParams) -> np.ndarray:
    return clcf_stages(fl, fh, p)["fused"]


def clcf_grad_low(fl, fh, w, proj: ConvParams, upstream=None) -> np.ndarray:
    """Gradient of ``sum(upstream * proj(gated_mix(fl, fh, w)))`` w.r.t. ``fl`` with ``w`` frozen."""
    fl = check_nchw(fl, "fl")
    g = np.ones((fl.shape[0], proj.out_channels) + fl.shape[2:]) if upstream is None else upstream
    return (1.0 + w) * conv2d_input_grad(g, proj, fl.shape)


class CLCFFusion(BaseEstimator):
    """Estimator wrapper; ``fit(fl)`` sizes the block, ``transform(fl, fh)`` fuses."""

    def __init__(self, heads=2, groups=4, zero_gate=False, random_state=0):
        self.heads = heads
        self.groups = groups
        self.zero_gate = zero_gate
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_nchw(X)
        self.n_channels_in_ = X.shape[1]
        self.params_ = init_clcf(self.n_channels_in_, heads=self.heads, groups=self.groups,
                                 zero_gate=self.zero_gate, seed=self.random_state)
        return self

    def transform(self, fl, fh):
        check_is_fitted(self, "params_")
        return clcf_fuse(fl, fh, self.params_)
