"""Acceptance criteria 1-9, one PASS/FAIL line each.

Every test gathers named sub-checks, records a summary line (printed and
echoed in the pytest terminal summary) and then asserts all of them.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

import oracles
from cli_cases import make_pairs, run_all
from pcbkit.cli import main
from pcbkit.condgen import adaptive_canny, build_prompt, classify_scale, locate_cell, otsu_threshold
from pcbkit.defects import DefectInstance, read_records
from pcbkit.detector import clcf_stages, dpca_stages, init_clcf, init_irsa, irsa_forward, irsa_stages
from pcbkit.diffusion import (
    OracleDenoiser,
    ToyUNet,
    cond_mod,
    cond_mod_grad_noise,
    ddim_sample,
    ddim_step,
    forward_noising,
    init_condmod,
    init_condmods,
    init_scale_encoder,
    init_toy_unet,
    injection_forward,
    make_schedule,
)
from pcbkit.exceptions import DimensionError
from pcbkit.metrics import FeatureStats, class_flags, fid, mean_ap, psnr, ssim
from pcbkit.numerics import grad_check, group_norm
from pcbkit.pipeline import DatasetManifest, build_extend1, read_manifest, write_manifest

TESTS = Path(__file__).parent
WIDTHS = (8, 16, 16, 16)


class Criterion:
    def __init__(self, number, title, log):
        self.number, self.title, self.log = number, title, log
        self.checks = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def runtime_below(self, seconds):
        took = time.perf_counter() - self.start
        self.check(f"runtime < {seconds:g} s", took < seconds, f"{took:.2f} s")

    def finish(self):
        failed = [c for c in self.checks if not c[1]]
        status = "FAIL" if failed else "PASS"
        parts = "; ".join(f"{n}{' (' + d + ')' if d else ''}{'' if ok else ' FAILED'}" for n, ok, d in self.checks)
        line = f"criterion {self.number}: {status}  {self.title}: {parts}"
        self.log.append(line)
        print(line)
        assert not failed, line


def test_criterion_1_diffusion_round_trip(acceptance_log):
    c = Criterion(1, "diffusion round-trip", acceptance_log)
    r = np.random.default_rng(1)
    s = make_schedule(50)
    z0, eps = r.standard_normal((2, 1, 4, 16, 16))
    errs = {t: float(np.abs(ddim_step(forward_noising(z0, t, eps, s), eps, t, 0, s) - z0).max())
            for t in (1, 10, 25, 49)}
    worst = max(errs.values())
    c.check("single-step inversion < 1e-9", worst < 1e-9, f"max err {worst:.1e}")
    chain = ddim_sample(forward_noising(z0, 50, eps, s), OracleDenoiser(eps), s, 10)
    err = float(np.abs(chain - z0).max())
    c.check("10-step chain < 1e-7", err < 1e-7, f"max err {err:.1e}")
    c.runtime_below(5)
    c.finish()


def test_criterion_2_zero_init_transparency(acceptance_log):
    c = Criterion(2, "zero-init transparency", acceptance_log)
    same = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        net = ToyUNet(init_toy_unet(4, WIDTHS, seed=seed))
        enc = init_scale_encoder(2, WIDTHS, seed=seed + 1)
        mods = init_condmods(WIDTHS, 4, 64, seed=seed + 2)
        z = r.standard_normal((1, 4, 64, 64))
        cond = r.random((1, 2, 64, 64))
        t = int(r.integers(1, 51))
        same += np.array_equal(injection_forward(z, t, cond, net, enc, mods, np.zeros(64)), net(z, t))
    c.check("bitwise equal to unconditioned denoiser", same == 20, f"{same}/20 inputs")
    c.finish()


def test_criterion_3_condmod_identity(acceptance_log):
    c = Criterion(3, "CondMod identity", acceptance_log)
    worst = 0.0
    for seed in range(50):
        r = np.random.default_rng(seed)
        groups = int(r.choice([1, 2, 4]))
        ch = groups * int(r.integers(1, 4))
        p = init_condmod(ch, groups, seed=seed)
        for conv in (p.alpha_conv, p.beta_conv):
            conv.weight[:] = 0.0
            conv.bias[:] = 0.0
        hw = tuple(int(v) for v in r.integers(2, 7, 2))
        x = r.standard_normal((int(r.integers(1, 3)), ch) + hw)
        cond = r.standard_normal(x.shape)
        worst = max(worst, float(np.abs(cond_mod(x, cond, np.zeros(ch), p) - group_norm(x, groups, p.eps)).max()))
    c.check("alpha=beta=text=0 gives GroupNorm exactly", worst == 0.0, f"50 seeds, max err {worst:g}")
    r = np.random.default_rng(99)
    p = init_condmod(4, 2, seed=3)
    x, cond = r.standard_normal((2, 1, 4, 3, 3))
    g, text = r.standard_normal(x.shape), r.standard_normal(4)
    err = grad_check(lambda z: float((cond_mod(z, cond, text, p) * g).sum()),
                     lambda z: cond_mod_grad_noise(z, cond, text, p, g), x)
    c.check("grad_check < 1e-4", err < 1e-4, f"rel err {err:.1e}")
    c.finish()


def test_criterion_4_irsa_contract(acceptance_log):
    c = Criterion(4, "IRSA contract", acceptance_log)
    r = np.random.default_rng(4)
    preserved = rejected = bad = 0
    for ch in (4, 8, 16):
        for ratio in (1, 2, 4):
            for g in (1, 2, 4, 8):
                if (ch * ratio) % g:
                    try:
                        init_irsa(ch, ratio, 2, g)
                        bad += 1
                    except DimensionError:
                        rejected += 1
                    continue
                x = r.standard_normal((1, ch, 4, 4))
                if irsa_forward(x, init_irsa(ch, ratio, 2, g, seed=ch + ratio + g)).shape == x.shape:
                    preserved += 1
                else:
                    bad += 1
    c.check("shape sweep", bad == 0, f"{preserved} preserved, {rejected} indivisible rejected")
    x = r.standard_normal((1, 8, 5, 5))
    st = irsa_stages(x, init_irsa(8, 2, 2, 8, zero_merge=True, seed=1))
    c.check("zero-merge residual exact", np.all(st["out"] == 0) and np.array_equal(st["final"], x + st["pre"]))
    worst = 0.0
    for seed in range(5):
        p = init_irsa(4, 2, 2, 8, seed=seed)
        x = r.standard_normal((1, 4, 6, 6))
        worst = max(worst, float(np.abs(irsa_forward(x, p) - oracles.irsa(x, p)).max()))
    c.check("composed oracle on 1x4x6x6 < 1e-10", worst < 1e-10, f"max err {worst:.1e}")
    c.finish()


def test_criterion_5_clcf_dpca_contract(acceptance_log):
    c = Criterion(5, "CLCF/DPCA contract", acceptance_log)
    r = np.random.default_rng(5)
    inside = True
    lo, hi = 1.0, 0.0
    for seed in range(10):
        p = init_clcf(4, seed=seed)
        for scale in (0.1, 1.0, 10.0, 1000.0):
            w = dpca_stages(r.standard_normal((1, 8, 4, 4)) * scale, p.dpca)["gate"]
            inside &= bool(np.all((w > 0) & (w < 1)))
            lo, hi = min(lo, float(w.min())), max(hi, float(w.max()))
    c.check("gate strictly in (0,1)", inside, f"observed [{lo:.3g}, {hi!r}]")
    p = init_clcf(8, seed=4)
    f = r.standard_normal((1, 8, 4, 4))
    c.check("fl=fh gives 3F exactly", np.array_equal(clcf_stages(f, f, p)["proj_input"], 3 * f))
    p = init_clcf(4, seed=5)
    fl, fh = r.standard_normal((2, 1, 4, 4, 4))
    st = clcf_stages(fl, fh, p)
    want = np.empty_like(fl)
    for idx in np.ndindex(fl.shape):
        a, b, g = float(fl[idx]), float(fh[idx]), float(st["gate"][idx])
        want[idx] = g * a + (1 - g) * b + a + b
    err = float(np.abs(st["proj_input"] - want).max())
    c.check("elementwise mix oracle < 1e-10", err < 1e-10, f"max err {err:.1e}")
    p = init_clcf(4, zero_gate=True, seed=6)
    c.check("zero gate logits give 1.5(fl+fh) exactly",
            np.array_equal(clcf_stages(fl, fh, p)["proj_input"], 1.5 * (fl + fh)))
    c.finish()


def _bruteforce_map50(preds, gts, classes):
    aps = []
    for cls in classes:
        pooled = []
        for img in sorted({p.image_id for p in preds if p.cls == cls}):
            ps = [p for p in preds if p.cls == cls and p.image_id == img]
            gs = [g.box for g in gts if g.cls == cls and g.image_id == img]
            flags = oracles.greedy_match_bruteforce([p.box for p in ps], [p.score for p in ps], gs, 0.5)
            order = sorted(range(len(ps)), key=lambda i: -ps[i].score)
            pooled += [(ps[i].score, f) for i, f in zip(order, flags)]
        pooled.sort(key=lambda t: -t[0])
        aps.append(oracles.ap_all_points([f for _, f in pooled], sum(g.cls == cls for g in gts)))
    return float(np.mean(aps))


def test_criterion_6_metrics_oracles(acceptance_log, data_dir):
    c = Criterion(6, "metrics oracles", acceptance_log)
    r = np.random.default_rng(6)
    a = r.standard_normal((5, 5))
    s = FeatureStats(r.standard_normal(5), a @ a.T + 0.1 * np.eye(5))
    c.check("fid(s,s) < 1e-6", abs(fid(s, s)) < 1e-6, f"{fid(s, s):.1e}")
    d1 = fid(FeatureStats([0.5], [[2.0]]), FeatureStats([-1.0], [[0.5]]))
    want1 = 1.5 ** 2 + 2.0 + 0.5 - 2 * math.sqrt(1.0)
    diag = fid(FeatureStats([0, 0], np.diag([1.0, 4.0])), FeatureStats([0, 0], np.diag([4.0, 1.0])))
    c.check("closed-form FID to 1e-9", abs(d1 - want1) < 1e-9 and abs(diag - 2.0) < 1e-9,
            f"d=1 {d1:.12g}, diagonal {diag:.12g}")
    x = r.integers(0, 256, (32, 32)).astype(float)
    c.check("ssim(x,x) = 1 exactly", ssim(x, x) == 1.0)
    x = r.integers(0, 255, (16, 16)).astype(float)
    v = psnr(x, x + 1)
    c.check("PSNR unit offset 48.1308 +- 1e-3", abs(v - 48.1308) < 1e-3, f"{v:.4f} dB")
    preds, gts = read_records(data_dir / "det_pred.jsonl"), read_records(data_dir / "det_gt.jsonl")
    rep = mean_ap(preds, gts)
    want = _bruteforce_map50(preds, gts, list(rep.per_class))
    c.check("mAP vs brute-force PR integration within 0.01", abs(rep.map50 - want) <= 0.01,
            f"{rep.map50:.5f} vs {want:.5f}, {len(rep.per_class)} classes")
    c.runtime_below(10)
    c.finish()


def test_criterion_7_condgen_oracles(acceptance_log):
    c = Criterion(7, "condgen oracles", acceptance_log)
    r = np.random.default_rng(7)
    same = 0
    for _ in range(100):
        img = r.integers(0, 256, (16, 16)).astype(np.uint8)
        same += otsu_threshold(img) == oracles.otsu(img)
    c.check("otsu equals exhaustive search", same == 100, f"{same}/100")
    step = np.zeros((64, 64), np.uint8)
    step[:, 32:] = 255
    edges = adaptive_canny(step)
    cols = np.nonzero(edges.any(axis=0))[0]
    c.check("vertical step gives one full 1-px column", len(cols) == 1 and edges[:, cols[0]].all(),
            f"columns {cols.tolist()}")
    scales = [classify_scale((0, 0, area, 1)) for area in (100, 1024, 10000)]
    cells = [locate_cell(*p) for p in ((0.5, 0.5), (0.1, 0.9), (1.0, 0.0))]
    c.check("classify_scale examples", scales == ["small", "medium", "large"], ",".join(scales))
    c.check("locate_cell examples", cells == ["center", "bottom-left", "top-right"], ",".join(cells))
    one = build_prompt([DefectInstance("short", (295, 295, 10, 10))], (600, 600))
    two = build_prompt([DefectInstance("open", (10, 10, 40, 40)), DefectInstance("spur", (560, 560, 10, 10))],
                       (600, 600))
    cells7 = [(col, row) for col in range(3) for row in range(3)][:7]
    bites = [DefectInstance("mouse_bite", (int(cells7[i % 7][0] * 200 + 10 + 3 * (i // 7)),
                                           int(cells7[i % 7][1] * 200 + 10 + 3 * (i // 7)), 8, 8))
             for i in range(12)]
    region = build_prompt(bites, (600, 600), count_threshold=6, spread_threshold=5)
    c.check("build_prompt examples",
            one == "a PCB image with 1 small short defect at the center"
            and two == "a PCB image with 1 medium open defect at the top-left, 1 small spur defect at the bottom-right"
            and "scattered" in region, repr(region))
    c.runtime_below(10)
    c.finish()


def test_criterion_8_pipeline_determinism(acceptance_log, data_dir, tmp_path, capsys):
    c = Criterion(8, "pipeline determinism", acceptance_log)
    toy = read_manifest(data_dir / "toy_manifest.jsonl")
    targets = {"short": 10, "spur": 8, "mouse_bite": 7, "hole_breakout": 6}
    a, b = build_extend1(toy, targets, seed=5), build_extend1(toy, targets, seed=5)
    c.check("build_extend1 byte-identical", a.dumps() == b.dumps() and len(a) > len(toy),
            f"{len(a) - len(toy)} derived entries")
    pairs = make_pairs(tmp_path / "inputs")
    one = run_all(capsys, data_dir, tmp_path / "one", pairs)
    two = run_all(capsys, data_dir, tmp_path / "two", pairs)
    c.check("every CLI subcommand byte-identical", one == two and one[0] == [0] * 8,
            f"{len(one[0])} subcommands, {len(one[2])} output files")
    write_manifest(tmp_path / "m.jsonl", toy)
    back = read_manifest(tmp_path / "m.jsonl")
    lossless = (back == toy and DatasetManifest.loads(toy.dumps()) == toy
                and (tmp_path / "m.jsonl").read_bytes() == (data_dir / "toy_manifest.jsonl").read_bytes())
    c.check("manifest round-trip lossless", lossless)
    c.finish()


def _one_core():
    if hasattr(os, "sched_setaffinity"):
        os.sched_setaffinity(0, {min(os.sched_getaffinity(0))})


def test_criterion_9_full_suite(acceptance_log, capsys):
    c = Criterion(9, "full suite on one core", acceptance_log)
    code = main(["blocks-check"])
    capsys.readouterr()
    c.check("blocks-check exit 0", code == 0)
    if os.environ.get("PCBKIT_NESTED_SUITE"):
        c.check("module suites", True, "skipped inside nested run")
        c.finish()
        return
    env = dict(os.environ, PCBKIT_NESTED_SUITE="1")
    cmd = [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(TESTS),
           "--ignore", str(TESTS / "test_acceptance.py")]
    t0 = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, text=True, env=env, cwd=TESTS.parent,
                          preexec_fn=_one_core, timeout=600)
    took = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    c.check("module suites exit 0", proc.returncode == 0, tail)
    c.runtime_below(300)
    c.finish()
