"""Flip, 90-degree rotation and blur augmentation with exact box transforms, and the
deficit-filling expansion built on them."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path, PurePosixPath
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..condgen.image import check_gray, read_gray, write_gray
from ..defects import DEFECT_CLASSES, DefectInstance, canonical_class
from ..exceptions import ValidationError
from .manifest import DatasetManifest, ManifestEntry
from .stats import class_image_counts

AUGMENT_KINDS = ("hflip", "vflip", "rotate90k", "gaussianBlur")
GEOMETRIC_KINDS = ("hflip", "vflip", "rotate90k")


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    k: Optional[int] = None        # quarter turns counter-clockwise, rotate90k only
    sigma: Optional[float] = None  # gaussianBlur only

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ValidationError(f"unknown augmentation {self.kind!r}")
        if self.kind == "rotate90k" and self.k not in (1, 2, 3):
            raise ValidationError(f"rotation k must be 1, 2 or 3, got {self.k!r}")
        if self.kind == "gaussianBlur" and not (self.sigma is not None and self.sigma > 0):
            raise ValidationError(f"blur sigma must be positive, got {self.sigma!r}")

    def to_json(self) -> dict:
        rec = {"kind": self.kind}
        if self.kind == "rotate90k":
            rec["k"] = self.k
        if self.kind == "gaussianBlur":
            rec["sigma"] = self.sigma
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "AugmentOp":
        return cls(rec["kind"], rec.get("k"), rec.get("sigma"))


def sample_op(rng: np.random.Generator, sigma_range=(0.5, 1.5)) -> AugmentOp:
    kind = AUGMENT_KINDS[int(rng.integers(len(AUGMENT_KINDS)))]
    if kind == "rotate90k":
        return AugmentOp(kind, k=int(rng.integers(1, 4)))
    if kind == "gaussianBlur":
        return AugmentOp(kind, sigma=float(rng.uniform(*sigma_range)))
    return AugmentOp(kind)


def output_size(width: int, height: int, op: AugmentOp) -> tuple[int, int]:
    if op.kind == "rotate90k" and op.k % 2:
        return height, width
    return width, height


def transform_box(box, width: int, height: int, op: AugmentOp) -> tuple:
    """Map an (x, y, w, h) box through ``op`` on a ``width`` x ``height`` image."""
    x, y, w, h = box
    if op.kind == "hflip":
        return (width - x - w, y, w, h)
    if op.kind == "vflip":
        return (x, height - y - h, w, h)
    if op.kind == "rotate90k":
        for _ in range(op.k):
            # one counter-clockwise quarter turn; the old width becomes the new height
            x, y, w, h = y, width - x - w, h, w
            width, height = height, width
        return (x, y, w, h)
    return (x, y, w, h)


def transform_image(img, op: AugmentOp) -> np.ndarray:
    img = check_gray(img)
    if op.kind == "hflip":
        return img[:, ::-1].copy()
    if op.kind == "vflip":
        return img[::-1, :].copy()
    if op.kind == "rotate90k":
        return np.rot90(img, op.k).copy()
    blurred = ndimage.gaussian_filter(img.astype(np.float64), op.sigma, mode="nearest")
    return np.clip(np.rint(blurred), 0, 255).astype(np.uint8)


def apply_augment(img, instances: Sequence[DefectInstance], op: AugmentOp):
    """Augmented image and its instances; every moved box is re-checked in bounds."""
    img = check_gray(img)
    h, w = img.shape
    out = transform_image(img, op)
    nw, nh = output_size(w, h, op)
    moved = []
    for inst in instances:
        inst.check_within(w, h)
        new = DefectInstance(inst.cls, transform_box(inst.box, w, h, op))
        new.check_within(nw, nh)
        moved.append(new)
    return out, moved


def augment_entry(entry: ManifestEntry, op: AugmentOp, image: str, method: str = "extend1") -> ManifestEntry:
    w, h = output_size(entry.width, entry.height, op)
    insts = tuple(DefectInstance(i.cls, transform_box(i.box, entry.width, entry.height, op))
                  for i in entry.instances)
    prov = {"method": method, "source": entry.image, "op": op.to_json()}
    return ManifestEntry(image, entry.split, w, h, insts, prov)


def _derived_path(source: str, n: int) -> str:
    p = PurePosixPath(source)
    return str(p.with_name(f"{p.stem}__ext1_{n:05d}{p.suffix}"))


def _normalize_targets(targets: Mapping) -> dict:
    out = {}
    for cls, n in targets.items():
        n = int(n)
        if n < 0:
            raise ValidationError(f"target for {cls} is negative")
        out[canonical_class(cls)] = n
    return out


def build_extend1(m: DatasetManifest, targets: Mapping, seed: int = 0,
                  sigma_range=(0.5, 1.5)) -> DatasetManifest:
    """Fill per-class image-count deficits with augmented copies of that class's originals.

    Classes are processed in canonical order; an added image raises the count of
    every class it contains, so later deficits are measured after earlier fills.
    Sources are original (non-derived) entries only. The input is not modified.
    """
    targets = _normalize_targets(targets)
    counts = class_image_counts(m)
    for cls, n in targets.items():
        if n < counts[cls]:
            raise ValidationError(f"target {n} for {cls} is below the current count {counts[cls]}")
    rng = np.random.default_rng(seed)
    originals = [e for e in m.entries if e.provenance is None]
    taken = {e.image for e in m.entries}
    added, serial = [], 0
    for cls in DEFECT_CLASSES:
        if cls not in targets:
            continue
        sources = [e for e in originals if cls in e.classes]
        deficit = targets[cls] - counts[cls]
        if deficit > 0 and not sources:
            raise ValidationError(f"no source images for {cls}; cannot reach target {targets[cls]}")
        for _ in range(max(deficit, 0)):
            src = sources[int(rng.integers(len(sources)))]
            op = sample_op(rng, sigma_range)
            while _derived_path(src.image, serial) in taken:
                serial += 1
            path = _derived_path(src.image, serial)
            taken.add(path)
            serial += 1
            new = augment_entry(src, op, path)
            added.append(new)
            for c in new.classes:
                counts[c] += 1
    return m.with_entries(added)


def merge_synthetic(m: DatasetManifest, synthetic: Sequence[ManifestEntry]) -> DatasetManifest:
    """Append externally generated entries, tagging any without provenance as generated."""
    tagged = [e if e.provenance is not None else
              ManifestEntry(e.image, e.split, e.width, e.height, e.instances, {"method": "extend2"})
              for e in synthetic]
    return m.with_entries(tagged)


def materialize(m: DatasetManifest, src_root, out_root, jobs: int = 1) -> list[str]:
    """Write the image of every derived entry whose source lives under ``src_root``.

    Returns written paths in manifest order, whatever order the workers finish in.
    """
    src_root, out_root = Path(src_root), Path(out_root)
    todo = [e for e in m.entries if e.provenance and e.provenance.get("method") == "extend1"]

    def render(e: ManifestEntry) -> str:
        img = read_gray(src_root / e.provenance["source"])
        out = transform_image(img, AugmentOp.from_json(e.provenance["op"]))
        dest = out_root / e.image
        dest.parent.mkdir(parents=True, exist_ok=True)
        write_gray(dest, out)
        return str(dest)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(render, todo))
    return [render(e) for e in todo]


class Extend1Augmenter(BaseEstimator):
    """``fit`` records the manifest's class counts; ``transform`` fills up to ``targets``."""

    def __init__(self, targets=None, seed=0, sigma_min=0.5, sigma_max=1.5):
        self.targets = targets
        self.seed = seed
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max

    def fit(self, X: DatasetManifest, y=None):
        self.counts_ = class_image_counts(X)
        return self

    def transform(self, X: DatasetManifest) -> DatasetManifest:
        check_is_fitted(self, "counts_")
        return build_extend1(X, self.targets or {}, self.seed, (self.sigma_min, self.sigma_max))

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
