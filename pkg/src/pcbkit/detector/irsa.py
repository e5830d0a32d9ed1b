"""Inverted residual block coupling spatial self-attention with shift-wise convolution."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import DimensionError, ValidationError
from ..numerics import (
    AttentionParams,
    ConvParams,
    batch_norm_inference,
    conv2d,
    init_attention,
    init_conv,
    multihead_spatial_attention,
    relu,
)
from ..tensor import check_nchw

# (drow, dcol) content displacement
DIRECTIONS = {
    "up": (-1, 0),
    "down": (1, 0),
    "left": (0, -1),
    "right": (0, 1),
    "up-left": (-1, -1),
    "up-right": (-1, 1),
    "down-left": (1, -1),
    "down-right": (1, 1),
}
DIRECTION_ORDER = tuple(DIRECTIONS)


@dataclass
class ShiftSpec:
    directions: tuple  # one (drow, dcol) per channel group
    dw: ConvParams     # depthwise conv applied after shifting

    def __post_init__(self):
        self.directions = tuple(DIRECTIONS[d] if isinstance(d, str) else tuple(d) for d in self.directions)
        if not 1 <= len(self.directions) <= 8:
            raise ValidationError("shift needs between 1 and 8 groups")
        for d in self.directions:
            if d not in DIRECTIONS.values():
                raise ValidationError(f"{d} is not a unit shift direction")
        if self.dw.groups != self.dw.in_channels or self.dw.in_channels != self.dw.out_channels:
            raise DimensionError("shift conv must be depthwise")

    @property
    def groups(self) -> int:
        return len(self.directions)


def shift_groups(x, directions) -> np.ndarray:
    """Translate each contiguous channel group by its offset; vacated pixels become 0."""
    x = check_nchw(x)
    n, c, h, w = x.shape
    g = len(directions)
    if c % g:
        raise DimensionError(f"{c} channels not divisible into {g} shift groups")
    out = np.zeros_like(x)
    size = c // g
    for i, (dy, dx) in enumerate(directions):
        src = x[:, i * size:(i + 1) * size]
        dst = out[:, i * size:(i + 1) * size]
        dst[:, :, max(dy, 0):h + min(dy, 0), max(dx, 0):w + min(dx, 0)] = \
            src[:, :, max(-dy, 0):h - max(dy, 0), max(-dx, 0):w - max(dx, 0)]
    return out


def shift_wise_conv(x, s: ShiftSpec) -> np.ndarray:
    return conv2d(shift_groups(x, s.directions), s.dw)


def init_shift(rng, channels: int, groups: int = 8, directions: Optional[Sequence] = None) -> ShiftSpec:
    directions = DIRECTION_ORDER[:groups] if directions is None else directions
    return ShiftSpec(tuple(directions), init_conv(rng, channels, channels, 3, groups=channels))


@dataclass
class IrsaParams:
    cbr: ConvParams
    expand: ConvParams
    attn: AttentionParams
    shift: ShiftSpec
    merge: ConvParams
    bn_stats: dict = field(default_factory=dict)  # mean/var/gamma/beta; empty -> mean 0, var 1
    bn_eps: float = 1e-5

    def __post_init__(self):
        c = self.cbr.in_channels
        if self.cbr.out_channels != c or self.cbr.stride != 1:
            raise DimensionError("CBR must keep channels and resolution")
        c_exp = self.expand.out_channels
        if self.expand.in_channels != c or c_exp < c:
            raise DimensionError(f"expand must map {c} channels to at least {c}")
        if self.attn.proj_q.in_channels != c or self.attn.proj_v.in_channels != c_exp \
                or self.attn.proj_v.out_channels != c_exp:
            raise DimensionError("attention projections do not match the block widths")
        if self.shift.dw.in_channels != c_exp:
            raise DimensionError("shift conv width must equal the expanded width")
        if self.merge.in_channels != c_exp or self.merge.out_channels != c:
            raise DimensionError("merge conv must project the expanded width back to the input width")

    @property
    def channels(self) -> int:
        return self.cbr.in_channels


def init_irsa(channels: int, expansion: int = 2, heads: int = 2, shift_groups: int = 8, *,
              key_dim: Optional[int] = None, cbr_kernel: int = 3, zero_merge: bool = False,
              seed: int = 0) -> IrsaParams:
    if expansion < 1:
        raise ValidationError("expansion ratio must be >= 1")
    rng = np.random.default_rng(seed)
    c_exp = expansion * channels
    if c_exp % shift_groups:
        raise DimensionError(f"expanded width {c_exp} not divisible into {shift_groups} shift groups")
    key_dim = max(channels // heads, 1) if key_dim is None else key_dim
    return IrsaParams(
        cbr=init_conv(rng, channels, channels, cbr_kernel),
        expand=init_conv(rng, c_exp, channels, 1),
        attn=init_attention(rng, channels, c_exp, heads * key_dim, c_exp, heads),
        shift=init_shift(rng, c_exp, shift_groups),
        merge=init_conv(rng, channels, c_exp, 1, zero=zero_merge),
    )


def irsa_stages(x, p: IrsaParams) -> dict:
    """All intermediate tensors of the block, keyed by name."""
    x = check_nchw(x)
    if x.shape[1] != p.channels:
        raise DimensionError(f"input has {x.shape[1]} channels, block expects {p.channels}")
    pre = relu(batch_norm_inference(conv2d(x, p.cbr), eps=p.bn_eps, **p.bn_stats))
    expand = conv2d(pre, p.expand)
    att = multihead_spatial_attention(pre, expand, p.attn)
    swc = shift_wise_conv(att, p.shift)
    out = conv2d(att + swc, p.merge)
    return {"pre": pre, "expand": expand, "att": att, "swc": swc, "out": out,
            "final": x + pre + out}


def irsa_forward(x, p: IrsaParams) -> np.ndarray:
    return irsa_stages(x, p)["final"]


class IRSABlock(TransformerMixin, BaseEstimator):
    """Shape-preserving feature transformer; ``fit`` only initialises weights."""

    def __init__(self, expansion=2, heads=2, shift_groups=8, zero_merge=False, random_state=0):
        self.expansion = expansion
        self.heads = heads
        self.shift_groups = shift_groups
        self.zero_merge = zero_merge
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_nchw(X)
        self.n_channels_in_ = X.shape[1]
        self.params_ = init_irsa(self.n_channels_in_, self.expansion, self.heads, self.shift_groups,
                                 zero_merge=self.zero_merge, seed=self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return irsa_forward(X, self.params_)
