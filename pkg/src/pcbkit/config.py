"""Tolerances, default hyper-parameters and the flat ``key=value`` config file."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .exceptions import ValidationError

CONFIG_ENV_VAR = "UNIPCB_CONFIG"


@dataclass(frozen=True)
class Tolerances:
    softmax_sum: float = 1e-9
    group_norm_mean: float = 1e-6
    group_norm_var: float = 1e-4
    unit_norm: float = 1e-9
    ddim_single_step: float = 1e-9
    ddim_chain: float = 1e-7
    oracle_match: float = 1e-10
    grad_rel: float = 1e-4
    fid_zero: float = 1e-6
    fid_closed_form: float = 1e-9
    psnr_db: float = 1e-3
    ap_discretization: float = 0.01
    symmetric: float = 1e-8
    psd_eig: float = 1e-8


TOL = Tolerances()


@dataclass
class Config:
    """Every tunable threshold, factor and seed in one flat record.

    Values missing from a config file keep the defaults below.
    """

    # edge branch
    low_factor: float = 0.5
    high_factor: float = 1.5
    gaussian_sigma: float = 1.0
    gaussian_radius: int = 2
    # text branch
    scale_t1: float = 32.0 ** 2
    scale_t2: float = 96.0 ** 2
    count_threshold: int = 6
    spread_threshold: int = 5
    embed_dim: int = 64
    # depth stub
    depth_sigma: float = 2.0
    # diffusion
    num_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    latent_channels: int = 4
    # detector blocks
    expansion: int = 2
    heads: int = 2
    shift_groups: int = 8
    dpca_groups: int = 4
    # metrics
    ssim_window: int = 8
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    max_val: float = 255.0
    # augmentation
    blur_sigma_min: float = 0.5
    blur_sigma_max: float = 1.5
    # reproducibility
    seed: int = 0
    extra: dict = field(default_factory=dict, repr=False)

    def updated(self, **kwargs) -> "Config":
        return replace(self, **kwargs)


def _coerce(raw: str, typ):
    if typ in (int, "int"):
        return int(raw)
    if typ in (float, "float"):
        return float(raw)
    return raw


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    cfg = base if base is not None else Config()
    known = {f.name: f.type for f in fields(Config) if f.name != "extra"}
    updates, extra = {}, dict(cfg.extra)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in known:
            try:
                updates[key] = _coerce(value, known[key])
            except ValueError as exc:
                raise ValidationError(f"config line {lineno}: bad value for {key}: {value!r}") from exc
        else:
            extra[key] = value
    return replace(cfg, extra=extra, **updates)


def load_config(path: str | os.PathLike | None = None) -> Config:
    """Load a config from ``path``, falling back to ``$UNIPCB_CONFIG``, then defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return Config()
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: Config) -> str:
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in fields(Config) if f.name != "extra"]
    lines += [f"{k}={v}" for k, v in sorted(cfg.extra.items())]
    return "\n".join(lines) + "\n"
