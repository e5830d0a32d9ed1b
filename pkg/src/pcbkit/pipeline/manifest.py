"""Dataset manifest: one JSON object per image with its split, size and defect instances."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from ..defects import DefectInstance
from ..exceptions import ValidationError

SPLITS = ("train", "val")
DEFAULT_TRAIN_RATIO = 0.8


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    split: str
    width: int
    height: int
    instances: tuple = ()
    provenance: Optional[dict] = field(default=None, compare=True)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got {self.split!r}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValidationError(f"{self.image}: image size must be positive")
        insts = tuple(i if isinstance(i, DefectInstance) else DefectInstance(*i) for i in self.instances)
        for inst in insts:
            inst.check_within(self.width, self.height)
        object.__setattr__(self, "image", str(self.image))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "instances", insts)

    @property
    def classes(self) -> set[str]:
        return {i.cls for i in self.instances}

    def to_json(self) -> dict:
        rec = {
            "image": self.image,
            "split": self.split,
            "width": self.width,
            "height": self.height,
            "instances": [{"class": i.cls, "bbox": list(i.box)} for i in self.instances],
        }
        if self.provenance is not None:
            rec["provenance"] = self.provenance
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "ManifestEntry":
        try:
            insts = tuple(DefectInstance(i["class"], tuple(i["bbox"])) for i in rec.get("instances", []))
            return cls(rec["image"], rec["split"], rec["width"], rec["height"], insts, rec.get("provenance"))
        except KeyError as exc:
            raise ValidationError(f"manifest entry missing field {exc}") from exc


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple = ()
    train_ratio: float = DEFAULT_TRAIN_RATIO

    def __post_init__(self):
        entries = tuple(self.entries)
        seen = set()
        for e in entries:
            if e.image in seen:
                raise ValidationError(f"duplicate image path {e.image!r}")
            seen.add(e.image)
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def split_counts(self) -> dict:
        return {s: sum(e.split == s for e in self.entries) for s in SPLITS}

    def check_split(self) -> None:
        """Raise unless the train share is within one image of ``train_ratio``."""
        n = len(self.entries)
        if n and abs(self.split_counts()["train"] - self.train_ratio * n) > 1:
            raise ValidationError(f"split {self.split_counts()} is not {self.train_ratio:g} train")

    def dumps(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.entries)

    @classmethod
    def loads(cls, text: str, train_ratio: float = DEFAULT_TRAIN_RATIO) -> "DatasetManifest":
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                entries.append(ManifestEntry.from_json(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"manifest line {lineno}: {exc}") from exc
        return cls(tuple(entries), train_ratio)

    def with_entries(self, extra: Iterable[ManifestEntry]) -> "DatasetManifest":
        return DatasetManifest(self.entries + tuple(extra), self.train_ratio)


def read_manifest(path: str | os.PathLike, train_ratio: float = DEFAULT_TRAIN_RATIO) -> DatasetManifest:
    return DatasetManifest.loads(Path(path).read_text(encoding="utf-8"), train_ratio)


def write_manifest(path: str | os.PathLike, m: DatasetManifest) -> None:
    Path(path).write_text(m.dumps(), encoding="utf-8")
