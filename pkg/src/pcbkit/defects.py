"""Defect categories, instance/detection records and their JSON Lines form."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .exceptions import ValidationError

DEFECT_CLASSES = ("short", "spur", "spurious_copper", "open", "mouse_bite", "hole_breakout")
CLASS_INDEX = {name: i for i, name in enumerate(DEFECT_CLASSES)}


def canonical_class(value) -> str:
    """Accept a class index, a canonical id, or a display name ("mouse bite")."""
    if isinstance(value, bool):
        raise ValidationError(f"unknown defect class {value!r}")
    if isinstance(value, int):
        if 0 <= value < len(DEFECT_CLASSES):
            return DEFECT_CLASSES[value]
        raise ValidationError(f"class index {value} out of range")
    key = str(value).strip().lower().replace(" ", "_").replace("-", "_")
    if key not in CLASS_INDEX:
        raise ValidationError(f"unknown defect class {value!r}")
    return key


def display_name(cls: str) -> str:
    return canonical_class(cls).replace("_", " ")


def _check_box(box) -> tuple:
    if len(box) != 4:
        raise ValidationError(f"box must be [x, y, w, h], got {box!r}")
    x, y, w, h = box
    if not (w > 0 and h > 0):
        raise ValidationError(f"box width and height must be positive, got {box!r}")
    return tuple(box)


@dataclass(frozen=True)
class DefectInstance:
    cls: str
    box: tuple  # (x, y, w, h), top-left origin, pixels

    def __post_init__(self):
        object.__setattr__(self, "cls", canonical_class(self.cls))
        object.__setattr__(self, "box", _check_box(self.box))

    @property
    def area(self) -> float:
        return self.box[2] * self.box[3]

    def check_within(self, width: int, height: int) -> None:
        x, y, w, h = self.box
        if x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValidationError(f"box {self.box} outside {width}x{height} image")


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    cls: str
    box: tuple
    score: Optional[float] = None  # None for ground truth

    def __post_init__(self):
        object.__setattr__(self, "image_id", str(self.image_id))
        object.__setattr__(self, "cls", canonical_class(self.cls))
        object.__setattr__(self, "box", _check_box(self.box))
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")

    def to_json(self) -> dict:
        rec = {"image_id": self.image_id, "class": self.cls, "bbox": list(self.box)}
        if self.score is not None:
            rec["score"] = self.score
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "DetectionRecord":
        try:
            return cls(rec["image_id"], rec["class"], tuple(rec["bbox"]), rec.get("score"))
        except KeyError as exc:
            raise ValidationError(f"record missing field {exc}") from exc


def read_records(path: str | os.PathLike) -> list[DetectionRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(DetectionRecord.from_json(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_records(path: str | os.PathLike, records: Iterable[DetectionRecord]) -> None:
    Path(path).write_text("".join(json.dumps(r.to_json()) + "\n" for r in records), encoding="utf-8")


def instances_for_image(records: Iterable[DetectionRecord], image_id: str) -> list[DefectInstance]:
    return [DefectInstance(r.cls, r.box) for r in records if r.image_id == str(image_id)]
