"""Structured text prompts from defect boxes: scale, 3x3 location and distribution."""
from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from ..defects import DefectInstance, display_name
from ..exceptions import ValidationError

SCALES = ("small", "medium", "large")
GRID_CELLS = (
    "top-left", "top", "top-right",
    "left", "center", "right",
    "bottom-left", "bottom", "bottom-right",
)
INSTANCE_LEVEL, REGION_LEVEL = "instance-level", "region-level"
TEMPLATE_KINDS = ("prefix", "instance", "region", "scattered", "clustered")
DEFAULT_SCALE_THRESHOLDS = (32.0 ** 2, 96.0 ** 2)


def classify_scale(box, thresholds=DEFAULT_SCALE_THRESHOLDS) -> str:
    """small below t1, medium on [t1, t2], large above t2 (box area in px^2)."""
    t1, t2 = thresholds
    if not t1 < t2:
        raise ValidationError("scale thresholds need t1 < t2")
    area = box[2] * box[3]
    if area < t1:
        return "small"
    if area <= t2:
        return "medium"
    return "large"


def locate_cell(cx: float, cy: float) -> str:
    """Name of the 3x3 grid cell holding the normalised point (cx, cy)."""
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0) or math.isnan(cx) or math.isnan(cy):
        raise ValidationError(f"normalised coordinates must lie in [0, 1], got ({cx}, {cy})")
    col = min(int(math.floor(3 * cx)), 2)
    row = min(int(math.floor(3 * cy)), 2)
    return GRID_CELLS[3 * row + col]


def box_cell(box, width: int, height: int) -> str:
    x, y, w, h = box
    return locate_cell((x + w / 2) / width, (y + h / 2) / height)


@dataclass(frozen=True)
class PromptSpec:
    category: str
    scale: str
    location: str
    quantity: int
    mode: str


class TemplateLibrary:
    """Versioned prompt templates, one ``kind: template`` per line."""

    def __init__(self, templates: dict[str, str], version: str = "custom"):
        missing = [k for k in TEMPLATE_KINDS if k not in templates]
        if missing:
            raise ValidationError(f"template library lacks {missing}")
        self.templates = dict(templates)
        self.version = version

    @classmethod
    def parse(cls, text: str, version: str = "custom") -> "TemplateLibrary":
        templates = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            kind, sep, tmpl = line.partition(":")
            if not sep:
                raise ValidationError(f"template line needs 'kind: template', got {line!r}")
            templates[kind.strip()] = tmpl.strip()
        return cls(templates, version)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "TemplateLibrary":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read(), version=os.path.basename(os.fspath(path)))

    @classmethod
    def default(cls) -> "TemplateLibrary":
        text = resources.files("pcbkit").joinpath("data/prompt_templates_v1.txt").read_text(encoding="utf-8")
        return cls.parse(text, version="v1")

    def render(self, kind: str, **slots) -> str:
        return self.templates[kind].format(**slots)


def prompt_specs(instances: Sequence[DefectInstance], image_dims, count_threshold: int = 6,
                 scale_thresholds=DEFAULT_SCALE_THRESHOLDS) -> list[PromptSpec]:
    """Per-defect specs at low counts, per-category summaries above ``count_threshold``."""
    if not instances:
        raise ValidationError("need at least one defect instance")
    width, height = image_dims
    for inst in instances:
        inst.check_within(width, height)
    cells = [box_cell(i.box, width, height) for i in instances]
    scales = [classify_scale(i.box, scale_thresholds) for i in instances]
    if len(instances) <= count_threshold:
        return [PromptSpec(i.cls, s, c, 1, INSTANCE_LEVEL) for i, s, c in zip(instances, scales, cells)]

    specs = []
    for cls in dict.fromkeys(i.cls for i in instances):
        idx = [k for k, i in enumerate(instances) if i.cls == cls]
        specs.append(PromptSpec(
            cls,
            _most_common([scales[k] for k in idx], SCALES),
            _most_common([cells[k] for k in idx], GRID_CELLS),
            len(idx),
            REGION_LEVEL,
        ))
    return specs


def _most_common(values, order) -> str:
    counts = Counter(values)
    return max(order, key=lambda v: (counts[v], -order.index(v)))


def build_prompt(instances: Sequence[DefectInstance], image_dims, count_threshold: int = 6,
                 templates: TemplateLibrary | None = None, *,
                 scale_thresholds=DEFAULT_SCALE_THRESHOLDS, spread_threshold: int = 5) -> str:
    """Render the prompt for one image's defects.

    At most ``count_threshold`` defects gives one clause per defect in input
    order. More than that gives per-category counts followed by "scattered"
    when the defects occupy at least ``spread_threshold`` grid cells, else
    "locally clustered" around the busiest cell.
    """
    templates = templates or TemplateLibrary.default()
    specs = prompt_specs(instances, image_dims, count_threshold, scale_thresholds)
    prefix = templates.render("prefix")
    if specs[0].mode == INSTANCE_LEVEL:
        clauses = [templates.render("instance", quantity=s.quantity, scale=s.scale,
                                    category=display_name(s.category), location=s.location)
                   for s in specs]
        return f"{prefix} " + ", ".join(clauses)

    clauses = [templates.render("region", quantity=s.quantity, scale=s.scale,
                                category=display_name(s.category), location=s.location)
               for s in specs]
    width, height = image_dims
    cells = [box_cell(i.box, width, height) for i in instances]
    if len(set(cells)) >= spread_threshold:
        tail = templates.render("scattered")
    else:
        tail = templates.render("clustered", location=_most_common(cells, GRID_CELLS))
    return f"{prefix} " + ", ".join(clauses) + " " + tail
