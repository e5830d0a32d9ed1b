"""Generation and detection metrics."""
from .detection import (
    COCO_IOU_THRESHOLDS,
    DetectionReport,
    MatchResult,
    PRCurve,
    average_precision,
    class_flags,
    iou,
    match_detections,
    mean_ap,
    pr_at_best_f1,
)
from .generation import FeatureStats, SsimConfig, fid, lpips_form, mse, psnr, ssim, ssim_map, trace_sqrt_product
from .io import format_features, parse_features, read_features, write_features

__all__ = [
    "COCO_IOU_THRESHOLDS", "DetectionReport", "MatchResult", "PRCurve", "average_precision", "class_flags",
    "iou", "match_detections", "mean_ap", "pr_at_best_f1",
    "FeatureStats", "SsimConfig", "fid", "lpips_form", "mse", "psnr", "ssim", "ssim_map", "trace_sqrt_product",
    "format_features", "parse_features", "read_features", "write_features",
]
