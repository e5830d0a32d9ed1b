"""Four-stage backbone of IRSA blocks and the three-level gated-fusion neck (shape level)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import DimensionError
from ..numerics import ConvParams, conv2d, init_conv, resize_bilinear
from ..tensor import check_nchw
from .clcf import ClcfParams, clcf_fuse, init_clcf
from .irsa import IrsaParams, init_irsa, irsa_forward


@dataclass
class PyramidFeatures:
    s3: np.ndarray  # stride 8
    s4: np.ndarray  # stride 16
    s5: np.ndarray  # stride 32

    def levels(self) -> list[np.ndarray]:
        return [self.s3, self.s4, self.s5]


@dataclass
class StageParams:
    down: ConvParams
    irsa: IrsaParams


def init_backbone(in_channels: int = 3, widths=(8, 8, 16, 16), expansion: int = 2, heads: int = 2,
                  shift_groups: int = 8, seed: int = 0) -> list[StageParams]:
    """Stage 1 downsamples by 4, the rest by 2, giving strides 4/8/16/32."""
    rng = np.random.default_rng(seed)
    stages, prev = [], in_channels
    for i, w in enumerate(widths):
        stride = 4 if i == 0 else 2
        down = init_conv(rng, w, prev, 3, stride=stride, padding=1)
        irsa = init_irsa(w, expansion, heads, shift_groups, seed=int(rng.integers(2 ** 31)))
        stages.append(StageParams(down, irsa))
        prev = w
    return stages


def backbone_stages(img, stages: list[StageParams]) -> list[np.ndarray]:
    img = check_nchw(img, "image")
    if img.shape[2] % 32 or img.shape[3] % 32:
        raise DimensionError(f"image size {img.shape[2:]} must be divisible by 32")
    if len(stages) != 4:
        raise DimensionError("backbone needs four stages")
    outs, h = [], img
    for st in stages:
        h = irsa_forward(conv2d(h, st.down), st.irsa)
        outs.append(h)
    return outs


def backbone_forward(img, stages: list[StageParams]) -> PyramidFeatures:
    _, s3, s4, s5 = backbone_stages(img, stages)
    return PyramidFeatures(s3, s4, s5)


@dataclass
class NeckParams:
    clcf: list   # CLCF blocks for the L (s3), M (s4) and S (s5) levels
    align: list  # 1x1 convs bringing each level's partner to the level's width


def init_neck(widths=(8, 16, 16), groups: int = 4, heads: int = 2, seed: int = 0) -> NeckParams:
    """``widths`` are the s3/s4/s5 channel counts."""
    rng = np.random.default_rng(seed)
    partners = (widths[1], widths[2], widths[1])
    clcf = [init_clcf(w, heads=heads, groups=groups, seed=int(rng.integers(2 ** 31))) for w in widths]
    align = [init_conv(rng, w, pw, 1) for w, pw in zip(widths, partners)]
    return NeckParams(clcf, align)


def neck_partners(pyr: PyramidFeatures, neck: NeckParams) -> list[np.ndarray]:
    """High-level input for each level: the next deeper level upsampled, or for s5
    (which has no deeper level) s4 downsampled."""
    srcs = (pyr.s4, pyr.s5, pyr.s4)
    return [conv2d(resize_bilinear(src, *lvl.shape[2:]), al)
            for src, lvl, al in zip(srcs, pyr.levels(), neck.align)]


def neck_fuse(pyr: PyramidFeatures, neck: NeckParams) -> PyramidFeatures:
    fused = [clcf_fuse(lvl, partner, blk)
             for lvl, partner, blk in zip(pyr.levels(), neck_partners(pyr, neck), neck.clcf)]
    return PyramidFeatures(*fused)
