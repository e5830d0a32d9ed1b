import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcbkit.condgen import read_gray, write_gray
from pcbkit.defects import DefectInstance
from pcbkit.exceptions import ValidationError
from pcbkit.pipeline import (
    AugmentOp,
    DatasetManifest,
    Extend1Augmenter,
    ManifestEntry,
    apply_augment,
    build_extend1,
    class_image_counts,
    dataset_stats,
    materialize,
    merge_synthetic,
    read_manifest,
    sample_op,
    transform_box,
    write_manifest,
)

GEOMETRIC = [AugmentOp("hflip"), AugmentOp("vflip")] + [AugmentOp("rotate90k", k) for k in (1, 2, 3)]


@pytest.fixture
def toy(data_dir):
    return read_manifest(data_dir / "toy_manifest.jsonl")


# manifest and stats -------------------------------------------------------

def test_manifest_roundtrip(toy, tmp_path, data_dir):
    write_manifest(tmp_path / "m.jsonl", toy)
    again = read_manifest(tmp_path / "m.jsonl")
    assert again == toy
    assert (tmp_path / "m.jsonl").read_text() == (data_dir / "toy_manifest.jsonl").read_text()


def test_manifest_split_ratio(toy):
    toy.check_split()
    skewed = DatasetManifest(tuple(ManifestEntry(e.image, "train", e.width, e.height, e.instances) for e in toy))
    with pytest.raises(ValidationError):
        skewed.check_split()


def test_manifest_rejects_duplicates_and_out_of_bounds():
    e = ManifestEntry("a.png", "train", 10, 10)
    with pytest.raises(ValidationError):
        DatasetManifest((e, e))
    with pytest.raises(ValidationError):
        ManifestEntry("b.png", "train", 10, 10, (DefectInstance("open", (8, 8, 4, 4)),))
    with pytest.raises(ValidationError):
        ManifestEntry("c.png", "test", 10, 10)


def test_stats_hand_tally(toy, data_dir):
    assert dataset_stats(toy) == json.loads((data_dir / "toy_manifest_tally.json").read_text())


def test_stats_empty_and_counting_rule():
    empty = dataset_stats(DatasetManifest())
    assert empty["total_images"] == 0 and not any(empty["images"].values()) and not any(empty["defects"].values())
    insts = (DefectInstance("short", (0, 0, 2, 2)), DefectInstance("short", (3, 3, 2, 2)),
             DefectInstance("open", (5, 5, 2, 2)))
    s = dataset_stats(DatasetManifest((ManifestEntry("x.png", "train", 10, 10, insts),)))
    assert s["images"]["short"] == 1 and s["images"]["open"] == 1
    assert s["defects"]["short"] == 2 and s["defects"]["open"] == 1


# augmentation -------------------------------------------------------------

def _mask_box(mask):
    ys, xs = np.nonzero(mask)
    return (int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))


@pytest.mark.parametrize("op", GEOMETRIC, ids=lambda o: f"{o.kind}{o.k or ''}")
def test_box_transform_matches_mask_oracle(op, rng):
    for _ in range(10):
        h, w = int(rng.integers(5, 15)), int(rng.integers(5, 15))
        bw, bh = int(rng.integers(1, w)), int(rng.integers(1, h))
        box = (int(rng.integers(0, w - bw + 1)), int(rng.integers(0, h - bh + 1)), bw, bh)
        mask = np.zeros((h, w), np.uint8)
        mask[box[1]:box[1] + bh, box[0]:box[0] + bw] = 255
        out, moved = apply_augment(mask, [DefectInstance("spur", box)], op)
        assert moved[0].box == _mask_box(out)


def test_hflip_involution_and_rotation_cycle(rng):
    img = rng.integers(0, 256, (9, 13)).astype(np.uint8)
    insts = [DefectInstance("open", (2, 3, 4, 5))]
    a, b = apply_augment(*apply_augment(img, insts, AugmentOp("hflip")), AugmentOp("hflip"))
    assert np.array_equal(a, img) and b == insts
    cur, boxes = img, insts
    for _ in range(4):
        cur, boxes = apply_augment(cur, boxes, AugmentOp("rotate90k", 1))
    assert np.array_equal(cur, img) and boxes == insts


def test_blur_keeps_boxes(rng):
    img = rng.integers(0, 256, (12, 12)).astype(np.uint8)
    insts = [DefectInstance("short", (1, 1, 3, 3))]
    out, moved = apply_augment(img, insts, AugmentOp("gaussianBlur", sigma=1.0))
    assert moved == insts and out.shape == img.shape and not np.array_equal(out, img)


def test_augment_op_validation():
    with pytest.raises(ValidationError):
        AugmentOp("rotate90k", 4)
    with pytest.raises(ValidationError):
        AugmentOp("gaussianBlur", sigma=0.0)
    with pytest.raises(ValidationError):
        AugmentOp("shear")
    assert AugmentOp.from_json(AugmentOp("rotate90k", 3).to_json()) == AugmentOp("rotate90k", 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_sampled_ops_valid(seed):
    op = sample_op(np.random.default_rng(seed))
    if op.kind == "gaussianBlur":
        assert 0.5 <= op.sigma <= 1.5
    if op.kind == "rotate90k":
        assert op.k in (1, 2, 3)


def test_transform_box_nonsquare_rotation():
    assert transform_box((1, 2, 3, 4), 10, 6, AugmentOp("rotate90k", 1)) == (2, 6, 4, 3)


# Extend I -----------------------------------------------------------------

def test_extend1_equal_targets_unchanged(toy):
    assert build_extend1(toy, class_image_counts(toy), seed=1) == toy


def test_extend1_plus_five_shorts(toy):
    counts = class_image_counts(toy)
    out = build_extend1(toy, {"short": counts["short"] + 5}, seed=7)
    new = out.entries[len(toy):]
    assert out.entries[:len(toy)] == toy.entries
    assert len(new) == 5 and all("short" in e.classes for e in new)
    for e in new:
        assert e.provenance["method"] == "extend1" and e.provenance["source"] in {x.image for x in toy}
        for inst in e.instances:
            inst.check_within(e.width, e.height)
    assert class_image_counts(out)["short"] == counts["short"] + 5


def test_extend1_deterministic(toy):
    targets = {"short": 10, "mouse_bite": 8, "hole_breakout": 6}
    a, b = build_extend1(toy, targets, seed=3), build_extend1(toy, targets, seed=3)
    assert a.dumps() == b.dumps()
    assert build_extend1(toy, targets, seed=4).dumps() != a.dumps()
    for cls, n in targets.items():
        assert class_image_counts(a)[cls] >= n


def test_extend1_does_not_mutate_input(toy):
    before = toy.dumps()
    build_extend1(toy, {"open": 12}, seed=0)
    assert toy.dumps() == before


def test_extend1_errors(toy):
    with pytest.raises(ValidationError):
        build_extend1(toy, {"short": 1}, seed=0)
    lonely = DatasetManifest((ManifestEntry("a.png", "train", 8, 8, (DefectInstance("open", (0, 0, 2, 2)),)),))
    with pytest.raises(ValidationError):
        build_extend1(lonely, {"spur": 2}, seed=0)


def test_extend1_estimator(toy):
    est = Extend1Augmenter(targets={"spur": 7}, seed=2)
    out = est.fit_transform(toy)
    assert est.counts_ == class_image_counts(toy)
    assert out.dumps() == build_extend1(toy, {"spur": 7}, 2).dumps()


def test_merge_synthetic(toy):
    syn = [ManifestEntry("gen/001.png", "train", 64, 48, (DefectInstance("spur", (1, 1, 4, 4)),))]
    out = merge_synthetic(toy, syn)
    assert len(out) == len(toy) + 1 and out.entries[-1].provenance == {"method": "extend2"}
    with pytest.raises(ValidationError):
        merge_synthetic(toy, [toy.entries[0]])


def test_materialize_parallel_matches_serial(toy, tmp_path, rng):
    src = tmp_path / "src"
    for e in toy:
        (src / e.image).parent.mkdir(parents=True, exist_ok=True)
        write_gray(src / e.image, rng.integers(0, 256, (e.height, e.width)).astype(np.uint8))
    out = build_extend1(toy, {"open": 9, "spur": 8}, seed=5)
    a = materialize(out, src, tmp_path / "a", jobs=1)
    b = materialize(out, src, tmp_path / "b", jobs=4)
    assert len(a) == len(out) - len(toy)
    for pa, pb, e in zip(a, b, out.entries[len(toy):]):
        ia, ib = read_gray(pa), read_gray(pb)
        assert np.array_equal(ia, ib) and ia.shape == (e.height, e.width)
