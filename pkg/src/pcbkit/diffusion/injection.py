"""Wire encoded conditions and the text embedding into a denoiser at four resolutions."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..condgen.generator import ConditionSet
from ..tensor import as_tensor
from .condmod import CondModParams, init_condmod
from .encoder import ScaleEncoderParams, encode_conditions
from .schedule import NoiseSchedule, ddim_sample


def condition_tensor(cond) -> np.ndarray:
    if isinstance(cond, ConditionSet):
        return cond.condition_map()
    return as_tensor(cond)


def init_condmods(widths, groups: int = 4, text_dim: int | None = None, seed: int = 0) -> list[CondModParams]:
    return [init_condmod(w, groups, text_dim, seed + i) for i, w in enumerate(widths)]


def injection_forward(z_t, t: int, cond, denoiser, enc: ScaleEncoderParams,
                      mods: Sequence[CondModParams], text_emb=None) -> np.ndarray:
    """Predicted noise for ``z_t`` with the condition map injected at every resolution.

    ``cond`` is a ConditionSet or an (N, C, 64, 64) condition map. When a
    ConditionSet is given and ``text_emb`` is None, its own text embedding is used.
    """
    if text_emb is None and isinstance(cond, ConditionSet):
        text_emb = cond.text_embedding
    features = encode_conditions(condition_tensor(cond), enc)
    return denoiser(z_t, t, conditions=features, text_emb=text_emb, mods=mods)


def sample_conditioned(z_T, cond, denoiser, enc: ScaleEncoderParams, mods: Sequence[CondModParams],
                       sched: NoiseSchedule, steps: int, text_emb=None) -> np.ndarray:
    """DDIM chain with conditions encoded once and reused at every step."""
    if text_emb is None and isinstance(cond, ConditionSet):
        text_emb = cond.text_embedding
    features = encode_conditions(condition_tensor(cond), enc)
    return ddim_sample(z_T, denoiser, sched, steps, conditions=features, text_emb=text_emb, mods=mods)
