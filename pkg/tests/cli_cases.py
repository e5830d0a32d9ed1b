"""Shared CLI invocations and helpers for determinism checks."""
import numpy as np

from pcbkit.cli import main
from pcbkit.condgen import write_gray
from pcbkit.metrics import write_features


def make_pairs(root):
    """Three real/gen image pairs plus two feature CSVs under ``root``."""
    r = np.random.default_rng(0)
    for sub in ("real", "gen"):
        (root / "pairs" / sub).mkdir(parents=True)
    for i in range(3):
        a = r.integers(0, 256, (16, 16)).astype(np.uint8)
        b = np.clip(a.astype(int) + r.integers(-20, 21, a.shape), 0, 255).astype(np.uint8)
        write_gray(root / "pairs" / "real" / f"{i}.png", a)
        write_gray(root / "pairs" / "gen" / f"{i}.png", b)
    write_features(root / "real.csv", r.standard_normal((40, 4)))
    write_features(root / "gen.csv", r.standard_normal((40, 4)) + 0.5)
    return root


def all_commands(data_dir, work, pairs):
    """One argv per subcommand; every output file lands under ``work``."""
    (work / "p.txt").write_text("a PCB image with 1 small open defect at the center\n")
    return [
        ["conditions", "--image", data_dir / "golden_input.png", "--instances", data_dir / "golden_instances.jsonl",
         "--out", work / "cond", "--jobs", 3],
        ["prompt", "--instances", data_dir / "golden_instances.jsonl", "--image", data_dir / "golden_input.png",
         "--image-id", "golden"],
        ["diffuse", "--steps", 2, "--seed", 4, "--cond-image", data_dir / "golden_input.png",
         "--prompt-file", work / "p.txt", "--out", work / "diff", "--schedule-csv", work / "sched.csv"],
        ["blocks-check", "--jobs", 2, "--seed", 3],
        ["eval-det", "--pred", data_dir / "det_pred.jsonl", "--gt", data_dir / "det_gt.jsonl"],
        ["eval-gen", "--real-feats", pairs / "real.csv", "--gen-feats", pairs / "gen.csv", "--pairs", pairs / "pairs"],
        ["stats", "--manifest", data_dir / "toy_manifest.jsonl"],
        ["augment", "--manifest", data_dir / "toy_manifest.jsonl", "--targets", "spur=9,hole_breakout=7",
         "--seed", 2, "--out", work / "ext.jsonl"],
    ]


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def run_all(capsys, data_dir, work, pairs):
    """Run every subcommand once; returns (exit codes, stdout texts, file bytes)."""
    work.mkdir()
    codes, outs = [], []
    for argv in all_commands(data_dir, work, pairs):
        codes.append(main([str(a) for a in argv]))
        outs.append(capsys.readouterr().out.replace(str(work), "<work>"))
    return codes, outs, tree_bytes(work)
