"""Per-class image and defect counts for a manifest."""
from __future__ import annotations

from collections import Counter

from ..defects import DEFECT_CLASSES
from .manifest import DatasetManifest


def class_image_counts(m: DatasetManifest) -> dict:
    """Images containing each class; an image counts once per class present."""
    c = Counter(cls for e in m.entries for cls in e.classes)
    return {k: c[k] for k in DEFECT_CLASSES}


def dataset_stats(m: DatasetManifest) -> dict:
    defects = Counter(i.cls for e in m.entries for i in e.instances)
    return {
        "images": class_image_counts(m),
        "defects": {k: defects[k] for k in DEFECT_CLASSES},
        "total_images": len(m.entries),
        "total_defects": sum(defects.values()),
        "splits": m.split_counts(),
    }
