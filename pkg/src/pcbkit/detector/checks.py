"""Invariant sweep over the neural blocks; backs the ``blocks-check`` command."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..config import TOL
from ..diffusion.condmod import cond_mod, cond_mod_grad_noise, init_condmod
from ..diffusion.encoder import init_scale_encoder, scale_align, scale_embed
from ..exceptions import DimensionError
from ..numerics import channel_shuffle, conv2d, grad_check, group_norm, scaled_dot_attention, softmax
from .backbone import backbone_forward, init_backbone, init_neck, neck_fuse
from .clcf import clcf_grad_low, clcf_stages, dpca_stages, gated_mix, init_clcf
from .irsa import DIRECTION_ORDER, init_irsa, init_shift, irsa_stages, shift_wise_conv


@dataclass
class CheckResult:
    block: str
    name: str
    passed: bool
    detail: str = ""


def _irsa_shape_sweep(rng):
    bad, valid, rejected = [], 0, 0
    for c, ratio, g in itertools.product((4, 8, 16), (1, 2, 4), (1, 2, 4, 8)):
        x = rng.standard_normal((1, c, 4, 4))
        if (ratio * c) % g:
            try:
                init_irsa(c, ratio, 2, g)
            except DimensionError:
                rejected += 1
                continue
            bad.append((c, ratio, g, "accepted indivisible groups"))
            continue
        valid += 1
        p = init_irsa(c, ratio, 2, g, seed=int(rng.integers(2 ** 31)))
        if irsa_stages(x, p)["final"].shape != x.shape:
            bad.append((c, ratio, g))
    detail = f"{valid} shapes preserved, {rejected} indivisible combos rejected"
    return not bad, f"failures: {bad}" if bad else detail


def _irsa_zero_merge(rng):
    x = rng.standard_normal((2, 8, 5, 5))
    st = irsa_stages(x, init_irsa(8, 2, 2, 8, zero_merge=True, seed=int(rng.integers(2 ** 31))))
    ok = np.all(st["out"] == 0) and np.array_equal(st["final"], x + st["pre"])
    return bool(ok), "X_out = 0 and output = x + X_pre exactly"


def _irsa_attention_hull(rng):
    x = rng.standard_normal((1, 8, 5, 5))
    p = init_irsa(8, 2, 2, 8, seed=int(rng.integers(2 ** 31)))
    st = irsa_stages(x, p)
    v = conv2d(st["expand"], p.attn.proj_v)
    lo = v.min(axis=(2, 3), keepdims=True)
    hi = v.max(axis=(2, 3), keepdims=True)
    ok = np.all(st["att"] >= lo - 1e-12) and np.all(st["att"] <= hi + 1e-12)
    return bool(ok), "X_att inside per-channel hull of V"


def _attention_hull(rng):
    q, k, v = rng.standard_normal((6, 3)), rng.standard_normal((9, 3)), rng.standard_normal((9, 4))
    out = scaled_dot_attention(q, k, v)
    ok = np.all(out >= v.min(0) - 1e-12) and np.all(out <= v.max(0) + 1e-12)
    return bool(ok), "outputs inside value hull"


def _softmax_sums(rng):
    x = rng.standard_normal((7, 11)) * 50
    err = float(np.abs(softmax(x, axis=1).sum(1) - 1).max())
    return err < TOL.softmax_sum, f"max |sum-1| = {err:.2e}"


def _shift_border(rng):
    v = 3.0
    s = init_shift(rng, 8, 8)
    s.dw.weight[:] = 0.0
    s.dw.weight[:, 0, 1, 1] = 1.0
    s.dw.bias[:] = 0.0
    out = shift_wise_conv(np.full((1, 8, 5, 5), v), s)
    ok = np.all(out[:, :, 1:-1, 1:-1] == v)
    for gi, name in enumerate(DIRECTION_ORDER):
        ch = out[0, gi]
        dy, dx = s.directions[gi]
        if dy:
            ok &= np.all(ch[0 if dy > 0 else -1, :] == 0)
        if dx:
            ok &= np.all(ch[:, 0 if dx > 0 else -1] == 0)
    return bool(ok), "zero fill opposite each shift"


def _dpca_range(rng):
    p = init_clcf(8, seed=int(rng.integers(2 ** 31)))
    x = rng.standard_normal((1, 16, 6, 6)) * 100  # large enough to saturate a raw sigmoid
    w = dpca_stages(x, p.dpca)["gate"]
    return bool(np.all((w > 0) & (w < 1))), f"gate range [{w.min():.4f}, {w.max():.4f}]"


def _dpca_zero_gate(rng):
    p = init_clcf(8, zero_gate=True, seed=int(rng.integers(2 ** 31)))
    w = dpca_stages(rng.standard_normal((1, 16, 4, 4)), p.dpca)["gate"]
    return bool(np.all(w == 0.5)), "sigmoid(0) = 0.5"


def _shuffle_permutation(rng):
    c = 24
    x = np.arange(c, dtype=float)[None, :, None, None] * np.ones((1, c, 2, 2))
    out = channel_shuffle(x, 4)
    perm = out[0, :, 0, 0].astype(int)
    back = channel_shuffle(out, c // 4)
    return bool(sorted(perm) == list(range(c)) and np.array_equal(back, x)), "bijection, inverse ok"


def _clcf_equal_inputs(rng):
    p = init_clcf(8, seed=int(rng.integers(2 ** 31)))
    f = rng.standard_normal((1, 8, 4, 4))
    st = clcf_stages(f, f, p)
    return bool(np.array_equal(st["proj_input"], 3 * f)), "Proj input = 3F"


def _clcf_half_gate(rng):
    p = init_clcf(8, zero_gate=True, seed=int(rng.integers(2 ** 31)))
    fl, fh = rng.standard_normal((2, 1, 8, 4, 4))
    st = clcf_stages(fl, fh, p)
    return bool(np.array_equal(st["proj_input"], 1.5 * (fl + fh))), "Proj input = 1.5(fl+fh)"


def _clcf_grad(rng):
    p = init_clcf(4, seed=int(rng.integers(2 ** 31)))
    fl, fh = rng.standard_normal((2, 1, 4, 3, 3))
    w = clcf_stages(fl, fh, p)["gate"]
    err = grad_check(lambda z: conv2d(gated_mix(z, fh, w), p.proj).sum(),
                     lambda z: clcf_grad_low(z, fh, w, p.proj), fl)
    return err < TOL.grad_rel, f"rel err {err:.2e}"


def _condmod_identity(rng):
    x, c = rng.standard_normal((2, 2, 8, 4, 4))
    p = init_condmod(8, 4, seed=int(rng.integers(2 ** 31)))
    for conv in (p.alpha_conv, p.beta_conv):
        conv.weight[:] = 0.0
        conv.bias[:] = 0.0
    out = cond_mod(x, c, np.zeros(8), p)
    return bool(np.array_equal(out, group_norm(x, 4, p.eps))), "alpha = beta = text = 0 gives GroupNorm"


def _condmod_grad(rng):
    x, c = rng.standard_normal((2, 1, 4, 3, 3))
    p = init_condmod(4, 2, seed=int(rng.integers(2 ** 31)))
    t = rng.standard_normal(4)
    err = grad_check(lambda z: cond_mod(z, c, t, p).sum(), lambda z: cond_mod_grad_noise(z, c, t, p), x)
    return err < TOL.grad_rel, f"rel err {err:.2e}"


def _scale_embed_zero(rng):
    enc = init_scale_encoder(2, seed=int(rng.integers(2 ** 31)))
    feats = scale_embed(scale_align(rng.standard_normal((1, 2, 64, 64)), enc), enc)
    shapes = [f.shape[2] for f in feats]
    return bool(all(np.all(f == 0) for f in feats) and shapes == [64, 32, 16, 8]), f"tap sizes {shapes}"


def _backbone_neck_shapes(rng):
    stages = init_backbone(seed=int(rng.integers(2 ** 31)))
    pyr = backbone_forward(rng.standard_normal((1, 3, 64, 64)), stages)
    fused = neck_fuse(pyr, init_neck(seed=int(rng.integers(2 ** 31))))
    got = [f.shape for f in pyr.levels()]
    ok = got == [(1, 8, 8, 8), (1, 16, 4, 4), (1, 16, 2, 2)] and [f.shape for f in fused.levels()] == got
    ok = ok and all(np.all(np.isfinite(f)) for f in fused.levels())
    return bool(ok), f"levels {got}"


CHECKS: list[tuple[str, str, Callable]] = [
    ("attention", "softmax_sums", _softmax_sums),
    ("attention", "convex_hull", _attention_hull),
    ("shuffle", "permutation", _shuffle_permutation),
    ("shift", "zero_fill", _shift_border),
    ("irsa", "shape_sweep", _irsa_shape_sweep),
    ("irsa", "zero_merge_residual", _irsa_zero_merge),
    ("irsa", "attention_hull", _irsa_attention_hull),
    ("dpca", "gate_range", _dpca_range),
    ("dpca", "zero_gate_half", _dpca_zero_gate),
    ("clcf", "equal_inputs_3f", _clcf_equal_inputs),
    ("clcf", "half_gate", _clcf_half_gate),
    ("clcf", "grad_low_frozen_gate", _clcf_grad),
    ("condmod", "identity", _condmod_identity),
    ("condmod", "grad_noise", _condmod_grad),
    ("scale_embed", "zero_init", _scale_embed_zero),
    ("backbone", "pyramid_shapes", _backbone_neck_shapes),
]


def run_checks(case: str | None = None, seed: int = 0, jobs: int = 1) -> list[CheckResult]:
    """Run every check (or those whose block matches ``case``); results keep declaration order."""
    selected = [(i, c) for i, c in enumerate(CHECKS) if case is None or c[0] == case]

    def run(item):
        i, (block, name, fn) = item
        try:
            ok, detail = fn(np.random.default_rng(seed * 1000 + i))
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        return CheckResult(block, name, bool(ok), detail)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, selected))
    return [run(item) for item in selected]


def format_table(results: list[CheckResult]) -> str:
    width = max((len(f"{r.block}.{r.name}") for r in results), default=10)
    lines = [f"{'STATUS':6}  {'CHECK':{width}}  DETAIL"]
    lines += [f"{'PASS' if r.passed else 'FAIL':6}  {r.block + '.' + r.name:{width}}  {r.detail}" for r in results]
    return "\n".join(lines)
