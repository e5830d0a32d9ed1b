"""FiLM-style condition modulation of a normalised noise feature."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..exceptions import DimensionError
from ..numerics import ConvParams, conv2d, group_norm, group_norm_grad, init_conv
from ..tensor import as_tensor, check_nchw, check_same_shape


@dataclass
class CondModParams:
    groups: int
    alpha_conv: ConvParams  # depthwise, predicts the scale offset
    beta_conv: ConvParams   # depthwise, predicts the shift
    text_proj: Optional[np.ndarray] = None  # (C, D) map from the text embedding, no bias
    eps: float = 1e-5

    def __post_init__(self):
        for conv in (self.alpha_conv, self.beta_conv):
            if conv.in_channels != conv.out_channels or conv.stride != 1:
                raise DimensionError("alpha/beta convs must preserve channels and spatial size")


def init_condmod(channels: int, groups: int = 4, text_dim: Optional[int] = None,
                 seed: int = 0) -> CondModParams:
    """Random depthwise weights with zero biases, so a zero condition leaves alpha = beta = 0."""
    rng = np.random.default_rng(seed)
    a = init_conv(rng, channels, channels, 3, groups=channels)
    b = init_conv(rng, channels, channels, 3, groups=channels)
    a.bias[:] = 0.0
    b.bias[:] = 0.0
    proj = rng.uniform(-0.05, 0.05, size=(channels, text_dim)) if text_dim else None
    return CondModParams(groups, a, b, proj)


def project_text(text_emb, p: CondModParams) -> np.ndarray:
    if p.text_proj is None:
        return as_tensor(text_emb)
    return as_tensor(text_emb) @ p.text_proj.T


def _broadcast_text(text, n: int, c: int) -> np.ndarray:
    text = as_tensor(text)
    if text.shape == (c,):
        return text[None, :, None, None]
    if text.shape == (n, c):
        return text[:, :, None, None]
    raise DimensionError(f"text embedding shape {text.shape} does not match {c} channels")


def cond_mod(noise_feat, cond_feat, text_emb, p: CondModParams) -> np.ndarray:
    """GroupNorm(noise) * (1 + alpha(cond)) + beta(cond) + text, text broadcast over space."""
    noise_feat = check_nchw(noise_feat, "noise feature")
    cond_feat = check_nchw(cond_feat, "condition feature")
    check_same_shape(noise_feat, cond_feat, "noise and condition features")
    n, c = noise_feat.shape[:2]
    text = _broadcast_text(text_emb, n, c)
    alpha = conv2d(cond_feat, p.alpha_conv)
    beta = conv2d(cond_feat, p.beta_conv)
    return group_norm(noise_feat, p.groups, p.eps) * (1.0 + alpha) + beta + text


def cond_mod_grad_noise(noise_feat, cond_feat, text_emb, p: CondModParams, upstream=None) -> np.ndarray:
    """Gradient of ``sum(upstream * cond_mod(...))`` with respect to the noise feature."""
    noise_feat = check_nchw(noise_feat, "noise feature")
    alpha = conv2d(check_nchw(cond_feat, "condition feature"), p.alpha_conv)
    g = np.ones_like(noise_feat) if upstream is None else as_tensor(upstream)
    return group_norm_grad(noise_feat, g * (1.0 + alpha), p.groups, p.eps)
