"""Noise predictors: a tiny four-resolution U-Net and an oracle that returns known noise."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from ..exceptions import DimensionError
from ..numerics import ConvParams, conv2d, group_norm, init_conv, resize_bilinear, silu
from ..tensor import as_tensor, check_nchw
from .condmod import CondModParams, cond_mod, project_text


class Denoiser(Protocol):
    def __call__(self, z_t: np.ndarray, t: int, conditions: Optional[Sequence[np.ndarray]] = None,
                 text_emb: Optional[np.ndarray] = None,
                 mods: Optional[Sequence[CondModParams]] = None) -> np.ndarray:
        """Predict the noise in ``z_t``; output has the shape of ``z_t``."""
        ...


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    emb = np.concatenate([np.sin(t * freqs), np.cos(t * freqs)])
    return np.pad(emb, (0, dim - emb.size))


@dataclass
class ToyUNetParams:
    in_conv: ConvParams
    level_convs: list   # one 3x3 conv per resolution
    down_convs: list    # stride-2 convs between resolutions
    up_convs: list      # 1x1 convs applied after each bilinear upsample
    out_conv: ConvParams
    time_proj: list     # (width, time_dim) matrices, one per resolution
    widths: tuple
    groups: int
    time_dim: int
    eps: float = 1e-5


def init_toy_unet(latent_channels: int = 4, widths=(8, 16, 16, 16), groups: int = 4,
                  time_dim: int = 8, seed: int = 0) -> ToyUNetParams:
    rng = np.random.default_rng(seed)
    widths = tuple(widths)
    for w in widths:
        if w % groups:
            raise DimensionError(f"width {w} not divisible by {groups} norm groups")
    return ToyUNetParams(
        in_conv=init_conv(rng, widths[0], latent_channels, 3),
        level_convs=[init_conv(rng, w, w, 3) for w in widths],
        down_convs=[init_conv(rng, b, a, 3, stride=2) for a, b in zip(widths[:-1], widths[1:])],
        up_convs=[init_conv(rng, a, b, 1) for a, b in zip(widths[:-1], widths[1:])],
        out_conv=init_conv(rng, latent_channels, widths[0], 3),
        time_proj=[rng.uniform(-0.05, 0.05, size=(w, time_dim)) for w in widths],
        widths=widths, groups=groups, time_dim=time_dim,
    )


class ToyUNet:
    """Encoder/decoder over four resolutions (full, 1/2, 1/4, 1/8).

    Every resolution has a normalisation site. Without conditions it is a
    plain GroupNorm; with conditions the matching CondMod replaces it, so a
    CondMod with alpha = beta = text = 0 reproduces the unconditioned output.
    """

    def __init__(self, params: ToyUNetParams):
        self.params = params

    def _normalize(self, level, h, conditions, text_emb, mods):
        p = self.params
        if conditions is None:
            return group_norm(h, p.groups, p.eps)
        mod = mods[level]
        text = np.zeros(h.shape[1]) if text_emb is None else project_text(text_emb, mod)
        return cond_mod(h, conditions[level], text, mod)

    def __call__(self, z_t, t, conditions=None, text_emb=None, mods=None):
        p = self.params
        z_t = check_nchw(z_t, "z_t")
        if conditions is not None:
            if mods is None or len(mods) != len(p.widths) or len(conditions) != len(p.widths):
                raise DimensionError("conditioning needs one feature and one CondMod per resolution")
        temb = timestep_embedding(t, p.time_dim)
        h = conv2d(z_t, p.in_conv)
        skips = []
        for level, conv in enumerate(p.level_convs):
            h = h + (p.time_proj[level] @ temb)[None, :, None, None]
            h = self._normalize(level, h, conditions, text_emb, mods)
            h = conv2d(silu(h), conv)
            skips.append(h)
            if level < len(p.down_convs):
                h = conv2d(h, p.down_convs[level])
        u = skips[-1]
        for level in range(len(p.widths) - 2, -1, -1):
            skip = skips[level]
            u = conv2d(resize_bilinear(u, *skip.shape[2:]), p.up_convs[level]) + skip
            u = silu(u)
        return conv2d(u, p.out_conv)


class OracleDenoiser:
    """Returns the exact noise that produced ``z_t``; DDIM then inverts noising exactly."""

    def __init__(self, eps):
        self.eps = as_tensor(eps)

    def __call__(self, z_t, t, conditions=None, text_emb=None, mods=None):
        if np.shape(z_t) != self.eps.shape:
            raise DimensionError("oracle noise shape does not match z_t")
        return self.eps.copy()
