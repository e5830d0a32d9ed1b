"""Dataset manifests, statistics and augmentation."""
from .augment import (
    AUGMENT_KINDS,
    AugmentOp,
    Extend1Augmenter,
    apply_augment,
    build_extend1,
    materialize,
    merge_synthetic,
    sample_op,
    transform_box,
    transform_image,
)
from .manifest import DatasetManifest, ManifestEntry, read_manifest, write_manifest
from .stats import class_image_counts, dataset_stats
