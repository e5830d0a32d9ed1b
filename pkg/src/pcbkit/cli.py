"""Command-line entry point: ``pcbkit <subcommand> ...``.

Reports go to stdout as one JSON object; diagnostics go to stderr. Validation
and invariant failures exit 1, usage errors exit 2.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .condgen import generate_conditions, image_condition_map, read_gray, write_gray
from .condgen.image import to_uint8_minmax
from .condgen.prompts import TemplateLibrary, build_prompt
from .config import Config, load_config
from .defects import instances_for_image, read_records
from .exceptions import PcbkitError
from .numerics import resize_bilinear, space_to_depth


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def _instances(path, image_id, image_path=None):
    if path is None:
        return []
    recs = read_records(path)
    if image_id is None and image_path and any(r.image_id == Path(image_path).stem for r in recs):
        image_id = Path(image_path).stem
    if image_id is None:
        ids = sorted({r.image_id for r in recs})
        if len(ids) > 1:
            raise PcbkitError(f"instances file covers {len(ids)} images; pass --image-id")
        image_id = ids[0] if ids else ""
    return instances_for_image(recs, image_id)


# subcommands ---------------------------------------------------------------

def cmd_conditions(args, cfg: Config) -> int:
    img = read_gray(args.image)
    insts = _instances(args.instances, args.image_id, args.image)
    templates = TemplateLibrary.from_file(args.templates) if args.templates else None
    cs = generate_conditions(img, insts, cfg, templates=templates, parallel=args.jobs > 1)
    report = {"prompt": cs.prompt, "height": img.shape[0], "width": img.shape[1],
              "edge_pixels": int((cs.edge > 0).sum()),
              "text_embedding": [float(v) for v in cs.text_embedding]}
    if args.out:
        from .tensor import save_tensor
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_gray(out / "edge.png", cs.edge)
        write_gray(out / "depth.png", to_uint8_minmax(cs.depth[0, 0]))
        save_tensor(out / "depth.txt", cs.depth)
        (out / "prompt.txt").write_text(cs.prompt + "\n", encoding="utf-8")
        report["outputs"] = sorted(p.name for p in out.iterdir())
    _emit(report)
    return 0


def cmd_prompt(args, cfg: Config) -> int:
    if args.image:
        h, w = read_gray(args.image).shape
    elif args.width and args.height:
        w, h = args.width, args.height
    else:
        raise PcbkitError("give --image or both --width and --height")
    insts = _instances(args.instances, args.image_id, args.image)
    templates = TemplateLibrary.from_file(args.templates) if args.templates else None
    prompt = build_prompt(insts, (w, h), cfg.count_threshold, templates,
                          scale_thresholds=(cfg.scale_t1, cfg.scale_t2), spread_threshold=cfg.spread_threshold)
    _emit({"prompt": prompt, "num_instances": len(insts), "width": w, "height": h})
    return 0


def cmd_diffuse(args, cfg: Config) -> int:
    from .condgen.embed import text_embed_stub
    from .diffusion import make_schedule
    from .diffusion.denoiser import ToyUNet, init_toy_unet
    from .diffusion.encoder import init_scale_encoder
    from .diffusion.injection import init_condmods, sample_conditioned
    from .tensor import save_tensor

    seed = cfg.seed if args.seed is None else args.seed
    size, widths = 64, (8, 16, 16, 16)
    sched = make_schedule(cfg.num_steps, cfg.beta_start, cfg.beta_end)
    prompt = Path(args.prompt_file).read_text(encoding="utf-8").strip() if args.prompt_file else ""
    emb = text_embed_stub(prompt, cfg.embed_dim, seed) if prompt else np.zeros(cfg.embed_dim)
    if args.cond_image:
        img = read_gray(args.cond_image)
        if img.shape != (size, size):
            img = np.clip(np.rint(resize_bilinear(img[None, None].astype(float), size, size)[0, 0]), 0, 255)
            img = img.astype(np.uint8)
        cond = image_condition_map(img, cfg)
    else:
        cond = np.zeros((1, 2, size, size))
    net = ToyUNet(init_toy_unet(cfg.latent_channels, widths, seed=seed))
    enc = init_scale_encoder(cond.shape[1], widths, seed=seed + 1)
    mods = init_condmods(widths, 4, cfg.embed_dim, seed=seed + 2)
    z_T = np.random.default_rng(seed).standard_normal((1, cfg.latent_channels, size, size))
    z0 = sample_conditioned(z_T, cond, net, enc, mods, sched, args.steps, text_emb=emb)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(out / "latent.txt", z0)
    write_gray(out / "latent.png", to_uint8_minmax(z0[0, 0]))
    report = {"steps": args.steps, "seed": seed, "prompt": prompt, "shape": list(z0.shape),
              "latent_mean": float(z0.mean()), "latent_std": float(z0.std()),
              "outputs": ["latent.txt", "latent.png"]}
    if args.schedule_csv:
        Path(args.schedule_csv).write_text(sched.to_csv(), encoding="utf-8")
        report["schedule_csv"] = str(args.schedule_csv)
    _emit(report)
    return 0


def cmd_blocks_check(args, cfg: Config) -> int:
    from .detector.checks import format_table, run_checks

    seed = cfg.seed if args.seed is None else args.seed
    results = run_checks(args.case, seed=seed, jobs=args.jobs)
    if not results:
        raise PcbkitError(f"no checks for case {args.case!r}")
    print(format_table(results), file=sys.stderr)
    ok = all(r.passed for r in results)
    _emit({"passed": ok, "checks": [asdict(r) for r in results]})
    return 0 if ok else 1


def parse_iou_spec(spec: str) -> tuple:
    """``0.5``, ``0.5:0.95`` (step 0.05) or ``0.5,0.75``."""
    try:
        if ":" in spec:
            lo, hi = (float(v) for v in spec.split(":"))
            n = int(round((hi - lo) / 0.05))
            vals = [round(lo + 0.05 * i, 2) for i in range(n + 1)]
        else:
            vals = [float(v) for v in spec.split(",")]
    except ValueError as exc:
        raise PcbkitError(f"bad IoU spec {spec!r}") from exc
    if not vals or any(not 0 < v <= 1 for v in vals):
        raise PcbkitError(f"IoU thresholds must lie in (0, 1]: {spec!r}")
    return tuple(vals)


def cmd_eval_det(args, cfg: Config) -> int:
    from .metrics import mean_ap

    report = mean_ap(read_records(args.pred), read_records(args.gt), iou_thresholds=parse_iou_spec(args.iou),
                     ap_method=args.ap_method)
    _emit(report.to_json())
    return 0


def pyramid_layers(x, y, levels: int = 3):
    """(features(x), features(y)) per level: 2x2 space-to-depth of a halving pixel pyramid."""
    fx, fy = x[None, None] / 255.0, y[None, None] / 255.0
    layers = []
    for _ in range(levels):
        h, w = fx.shape[2] // 2 * 2, fx.shape[3] // 2 * 2
        if h < 2 or w < 2:
            break
        layers.append((space_to_depth(fx[:, :, :h, :w], 2), space_to_depth(fy[:, :, :h, :w], 2)))
        fx, fy = resize_bilinear(fx, max(h // 2, 1), max(w // 2, 1)), resize_bilinear(fy, max(h // 2, 1), max(w // 2, 1))
    return layers


def cmd_eval_gen(args, cfg: Config) -> int:
    from .metrics import FeatureStats, SsimConfig, fid, lpips_form, psnr, read_features, ssim

    report = {}
    if args.real_feats or args.gen_feats:
        if not (args.real_feats and args.gen_feats):
            raise PcbkitError("--real-feats and --gen-feats go together")
        report["fid"] = fid(FeatureStats.from_features(read_features(args.real_feats)),
                            FeatureStats.from_features(read_features(args.gen_feats)))
    if args.pairs:
        root = Path(args.pairs)
        names = sorted(p.name for p in (root / "real").iterdir() if p.is_file())
        if not names:
            raise PcbkitError(f"no images under {root / 'real'}")
        scfg = SsimConfig(cfg.ssim_window, cfg.max_val, cfg.ssim_k1, cfg.ssim_k2)
        psnrs, ssims, lps = [], [], []
        for name in names:
            x, y = read_gray(root / "real" / name), read_gray(root / "gen" / name)
            psnrs.append(psnr(x, y, cfg.max_val))
            small = min(x.shape) < scfg.window
            ssims.append(ssim(x, y, SsimConfig(scfg.window, cfg.max_val, cfg.ssim_k1, cfg.ssim_k2,
                                               global_mode=small)))
            lps.append(lpips_form(pyramid_layers(x, y)))
        finite = [p for p in psnrs if math.isfinite(p)]
        report.update({
            "pairs": len(names),
            "psnr": float(np.mean(finite)) if finite else None,
            "psnr_identical_pairs": len(psnrs) - len(finite),
            "ssim": float(np.mean(ssims)),
            "lpips_form": float(np.mean(lps)),
            "lpips_features": "2x2 space-to-depth pixel pyramid, 3 levels, unit weights",
        })
    if not report:
        raise PcbkitError("nothing to evaluate; give feature files and/or --pairs")
    _emit(report)
    return 0


def cmd_stats(args, cfg: Config) -> int:
    from .pipeline import dataset_stats, read_manifest

    _emit(dataset_stats(read_manifest(args.manifest)))
    return 0


def _parse_targets(spec: str) -> dict:
    path = Path(spec)
    if path.is_file():
        return json.loads(path.read_text(encoding="utf-8"))
    out = {}
    for part in filter(None, (p.strip() for p in spec.split(","))):
        name, _, n = part.partition("=")
        if not n:
            raise PcbkitError(f"target {part!r} is not class=count")
        out[name.strip()] = int(n)
    return out


def cmd_augment(args, cfg: Config) -> int:
    from .pipeline import build_extend1, dataset_stats, materialize, read_manifest, write_manifest

    m = read_manifest(args.manifest)
    seed = cfg.seed if args.seed is None else args.seed
    out = build_extend1(m, _parse_targets(args.targets), seed, (cfg.blur_sigma_min, cfg.blur_sigma_max))
    write_manifest(args.out, out)
    report = {"added": len(out) - len(m), "seed": seed, "manifest": str(args.out), "stats": dataset_stats(out)}
    if args.images_root:
        written = materialize(out, args.images_root, args.out_root or args.images_root, jobs=args.jobs)
        report["images_written"] = len(written)
    _emit(report)
    return 0


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="key=value config file (falls back to $UNIPCB_CONFIG)")
    p = argparse.ArgumentParser(prog="pcbkit", parents=[common],
                                description="PCB defect condition generation, diffusion and evaluation toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    s = sub.add_parser("conditions", parents=[common], help="edge map, depth map and prompt for one image")
    s.add_argument("--image", required=True)
    s.add_argument("--instances", help="JSON Lines defect instances")
    s.add_argument("--image-id")
    s.add_argument("--templates", help="prompt template file")
    s.add_argument("--out", help="directory for edge.png, depth.png, depth.txt, prompt.txt")
    s.add_argument("--jobs", type=int, default=1, help="run the three branches concurrently when > 1")
    s.set_defaults(func=cmd_conditions)

    s = sub.add_parser("prompt", parents=[common], help="render the text prompt for one image's defects")
    s.add_argument("--instances", required=True)
    s.add_argument("--image-id")
    s.add_argument("--image")
    s.add_argument("--width", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--templates")
    s.set_defaults(func=cmd_prompt)

    s = sub.add_parser("diffuse", parents=[common], help="conditioned DDIM sampling with the toy denoiser")
    s.add_argument("--steps", type=int, default=10)
    s.add_argument("--seed", type=int)
    s.add_argument("--cond-image", help="grayscale image to derive conditions from (resized to 64x64)")
    s.add_argument("--prompt-file")
    s.add_argument("--out", required=True)
    s.add_argument("--schedule-csv", help="also write the noise schedule as CSV")
    s.set_defaults(func=cmd_diffuse)

    s = sub.add_parser("blocks-check", parents=[common], help="run the neural block invariant checks")
    s.add_argument("--case", help="only checks of this block (e.g. irsa, clcf)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_blocks_check)

    s = sub.add_parser("eval-det", parents=[common], help="precision, recall, mAP@0.5 and mAP@0.5:0.95")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--iou", default="0.5:0.95")
    s.add_argument("--ap-method", choices=("coco101", "all"), default="coco101")
    s.set_defaults(func=cmd_eval_det)

    s = sub.add_parser("eval-gen", parents=[common], help="FID, PSNR, SSIM and LPIPS-form scores")
    s.add_argument("--real-feats")
    s.add_argument("--gen-feats")
    s.add_argument("--pairs", help="directory with real/ and gen/ subdirectories of same-named images")
    s.set_defaults(func=cmd_eval_gen)

    s = sub.add_parser("stats", parents=[common], help="per-class image and defect counts")
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("augment", parents=[common], help="fill class deficits with flip/rotate/blur copies")
    s.add_argument("--manifest", required=True)
    s.add_argument("--targets", required=True, help="class=count,... or a JSON file")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="output manifest path")
    s.add_argument("--images-root", help="also render derived images from sources under this directory")
    s.add_argument("--out-root", help="where rendered images go (default: --images-root)")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_augment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None))
        return args.func(args, cfg)
    except (PcbkitError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"pcbkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
