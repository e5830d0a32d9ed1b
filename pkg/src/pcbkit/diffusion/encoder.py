"""Multi-scale condition encoder: SPD-downsampling trunk plus zero-initialised taps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import DimensionError
from ..numerics import ConvParams, conv2d, init_conv, silu, space_to_depth
from ..tensor import check_nchw

RESOLUTIONS = (64, 32, 16, 8)


@dataclass
class ScaleEncoderParams:
    align_convs: list  # 4 ConvParams: stem at 64, then one after each SPD stage
    embed_dw: list     # 4 depthwise 3x3 ConvParams, one per tap
    zero_convs: list   # 4 1x1 ConvParams, all-zero at init
    widths: tuple = field(default=(8, 16, 16, 16))

    @property
    def in_channels(self) -> int:
        return self.align_convs[0].in_channels


def init_scale_encoder(in_channels: int, widths=(8, 16, 16, 16), out_widths=None,
                       seed: int = 0) -> ScaleEncoderParams:
    """Seeded encoder; ``out_widths`` are the channel counts the taps must emit."""
    rng = np.random.default_rng(seed)
    out_widths = tuple(widths if out_widths is None else out_widths)
    if len(widths) != 4 or len(out_widths) != 4:
        raise DimensionError("need four tap widths")
    align = [init_conv(rng, widths[0], in_channels, 3)]
    for prev, cur in zip(widths[:-1], widths[1:]):
        align.append(init_conv(rng, cur, 4 * prev, 3))
    dw = [init_conv(rng, c, c, 3, groups=c) for c in widths]
    zero = [init_conv(rng, o, c, 1, zero=True) for c, o in zip(widths, out_widths)]
    return ScaleEncoderParams(align, dw, zero, tuple(widths))


def scale_align(cond, p: ScaleEncoderParams) -> list[np.ndarray]:
    """conv-SiLU, then three (SPD x2 -> conv-SiLU) stages; features at 64/32/16/8."""
    cond = check_nchw(cond, "condition map")
    if cond.shape[2:] != (RESOLUTIONS[0], RESOLUTIONS[0]):
        raise DimensionError(f"condition map must be {RESOLUTIONS[0]}x{RESOLUTIONS[0]}, got {cond.shape[2:]}")
    if cond.shape[1] != p.in_channels:
        raise DimensionError(f"condition map has {cond.shape[1]} channels, encoder expects {p.in_channels}")
    feats = [silu(conv2d(cond, p.align_convs[0]))]
    for conv in p.align_convs[1:]:
        feats.append(silu(conv2d(space_to_depth(feats[-1], 2), conv)))
    return feats


def scale_embed(pyramid, p: ScaleEncoderParams) -> list[np.ndarray]:
    """DWConv-SiLU refinement then zero conv at each of the four taps."""
    if len(pyramid) != 4:
        raise DimensionError("expected a four-level pyramid")
    return [conv2d(silu(conv2d(f, dw)), zc) for f, dw, zc in zip(pyramid, p.embed_dw, p.zero_convs)]


def encode_conditions(cond, p: ScaleEncoderParams) -> list[np.ndarray]:
    return scale_embed(scale_align(cond, p), p)


class ScaleEncoder(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` initialises weights for the input channel count,
    ``transform`` returns the four tap features."""

    def __init__(self, widths=(8, 16, 16, 16), out_widths=None, random_state=0):
        self.widths = widths
        self.out_widths = out_widths
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_nchw(X, "condition map")
        self.n_channels_in_ = X.shape[1]
        self.params_ = init_scale_encoder(self.n_channels_in_, tuple(self.widths),
                                          self.out_widths, self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return encode_conditions(X, self.params_)
