"""Detection metrics: IoU, greedy score-ordered matching, AP and mAP@0.5 / mAP@0.5:0.95."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..defects import DEFECT_CLASSES, DetectionRecord, canonical_class
from ..exceptions import ValidationError

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.arange(101) / 100  # k/100 is correctly rounded, unlike linspace


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return float(inter / (aw * ah + bw * bh - inter))


@dataclass
class MatchResult:
    order: list          # prediction indices sorted by descending score (stable)
    tp: np.ndarray       # bool, aligned with ``order``
    scores: np.ndarray   # aligned with ``order``
    matched_gt: list     # GT index per sorted prediction, or -1
    num_gt: int

    @property
    def fn(self) -> int:
        return self.num_gt - int(self.tp.sum())

    @property
    def fp(self) -> int:
        return int((~self.tp).sum())


def _score_order(scores: Sequence[float]) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: -scores[i])


def match_detections(pred_boxes: Sequence, pred_scores: Sequence[float], gt_boxes: Sequence,
                     iou_thresh: float = 0.5) -> MatchResult:
    """Greedy matching for one image and class.

    Predictions are visited in descending score (ties keep input order); each
    takes the still-unmatched GT with the highest IoU >= ``iou_thresh``
    (ties to the lower GT index).
    """
    if len(pred_boxes) != len(pred_scores):
        raise ValidationError("one score per predicted box required")
    order = _score_order(pred_scores)
    taken = [False] * len(gt_boxes)
    tp, matched = [], []
    for i in order:
        best, best_iou = -1, iou_thresh
        for j, g in enumerate(gt_boxes):
            if taken[j]:
                continue
            v = iou(pred_boxes[i], g)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = j, v
        if best >= 0:
            taken[best] = True
        tp.append(best >= 0)
        matched.append(best)
    return MatchResult(order, np.array(tp, dtype=bool),
                       np.array([pred_scores[i] for i in order], dtype=np.float64), matched, len(gt_boxes))


@dataclass
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    envelope: np.ndarray  # max precision at recall >= r

    @classmethod
    def from_flags(cls, tp_sorted, num_gt: int) -> "PRCurve":
        tp_sorted = np.asarray(tp_sorted, dtype=bool)
        ctp = np.cumsum(tp_sorted)
        cfp = np.cumsum(~tp_sorted)
        recall = ctp / num_gt
        precision = ctp / np.maximum(ctp + cfp, 1)
        envelope = np.maximum.accumulate(precision[::-1])[::-1] if precision.size else precision
        return cls(recall, precision, envelope)


def average_precision(tp_sorted, num_gt: int, method: str = "coco101") -> float:
    """Area under the interpolated PR curve for score-sorted TP flags.

    ``coco101`` averages the envelope at recall 0, 0.01, ..., 1;
    ``all`` integrates the envelope exactly over every recall step.
    """
    if num_gt < 1:
        raise ValidationError("average precision needs at least one ground-truth box")
    curve = PRCurve.from_flags(tp_sorted, num_gt)
    if curve.recall.size == 0:
        return 0.0
    if method == "coco101":
        idx = np.searchsorted(curve.recall, RECALL_POINTS, side="left")
        env = np.concatenate([curve.envelope, [0.0]])
        return float(env[idx].mean())
    if method == "all":
        prev = np.concatenate([[0.0], curve.recall[:-1]])
        return float(((curve.recall - prev) * curve.envelope).sum())
    raise ValidationError(f"unknown AP method {method!r}")


def class_flags(preds: Sequence[DetectionRecord], gts: Sequence[DetectionRecord], cls: str,
                iou_thresh: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Score-sorted (scores, TP flags) for one class across all images, plus its GT count."""
    cls = canonical_class(cls)
    gt_by_img = defaultdict(list)
    for g in gts:
        if g.cls == cls:
            gt_by_img[g.image_id].append(g.box)
    cls_preds = [(i, p) for i, p in enumerate(preds) if p.cls == cls]
    flagged = []  # (score, input index, tp)
    by_img = defaultdict(list)
    for i, p in cls_preds:
        by_img[p.image_id].append((i, p))
    for img, items in by_img.items():
        m = match_detections([p.box for _, p in items], [p.score for _, p in items],
                             gt_by_img.get(img, []), iou_thresh)
        for k, pos in enumerate(m.order):
            flagged.append((m.scores[k], items[pos][0], bool(m.tp[k])))
    flagged.sort(key=lambda t: (-t[0], t[1]))
    scores = np.array([f[0] for f in flagged], dtype=np.float64)
    flags = np.array([f[2] for f in flagged], dtype=bool)
    return scores, flags, sum(len(v) for v in gt_by_img.values())


@dataclass
class DetectionReport:
    map50: float
    map5095: float
    precision: float
    recall: float
    score_threshold: float | None
    per_class: dict = field(default_factory=dict)
    iou_thresholds: tuple = COCO_IOU_THRESHOLDS

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "pr_score_threshold": self.score_threshold,
            "pr_rule": "score threshold maximising F1 at IoU 0.5, pooled over classes",
            "map50": self.map50,
            "map5095": self.map5095,
            "iou_thresholds": list(self.iou_thresholds),
            "perClass": self.per_class,
        }


def pr_at_best_f1(scored_flags: Sequence[tuple[np.ndarray, np.ndarray]], num_gt: int):
    """Precision, recall and score cut maximising F1 over pooled (scores, flags) pairs."""
    scores = np.concatenate([s for s, _ in scored_flags]) if scored_flags else np.array([])
    flags = np.concatenate([f for _, f in scored_flags]) if scored_flags else np.array([], dtype=bool)
    if scores.size == 0 or num_gt == 0:
        return 0.0, 0.0, None
    order = np.argsort(-scores, kind="stable")
    scores, flags = scores[order], flags[order]
    ctp = np.cumsum(flags)
    n = np.arange(1, scores.size + 1)
    # only cut where the score changes, so equal scores stay together
    last = np.r_[scores[1:] != scores[:-1], True]
    prec, rec = ctp / n, ctp / num_gt
    f1 = np.where(prec + rec > 0, 2 * prec * rec / np.maximum(prec + rec, 1e-300), 0.0)
    f1 = np.where(last, f1, -1.0)
    k = int(np.argmax(f1))
    return float(prec[k]), float(rec[k]), float(scores[k])


def mean_ap(preds: Sequence[DetectionRecord], gts: Sequence[DetectionRecord],
            classes: Sequence[str] | None = None,
            iou_thresholds: Sequence[float] = COCO_IOU_THRESHOLDS, ap_method: str = "coco101") -> DetectionReport:
    """mAP@0.5 and mAP over ``iou_thresholds``; classes without GT are left out of the means."""
    if not gts:
        raise ValidationError("ground truth set is empty")
    if any(p.score is None for p in preds):
        raise ValidationError("every prediction needs a score")
    classes = [canonical_class(c) for c in (classes or DEFECT_CLASSES)]
    iou_thresholds = tuple(float(t) for t in iou_thresholds)
    per_class, ap50s, ap_means, pooled, total_gt = {}, [], [], [], 0
    for cls in classes:
        scores, flags, n_gt = class_flags(preds, gts, cls, 0.5)
        if n_gt == 0:
            continue
        total_gt += n_gt
        pooled.append((scores, flags))
        ap50 = average_precision(flags, n_gt, ap_method)
        aps = [ap50 if t == 0.5 else average_precision(class_flags(preds, gts, cls, t)[1], n_gt, ap_method)
               for t in iou_thresholds]
        per_class[cls] = {"num_gt": n_gt, "ap50": ap50, "ap": float(np.mean(aps))}
        ap50s.append(ap50)
        ap_means.append(float(np.mean(aps)))
    precision, recall, thr = pr_at_best_f1(pooled, total_gt)
    return DetectionReport(float(np.mean(ap50s)), float(np.mean(ap_means)), precision, recall, thr,
                           per_class, iou_thresholds)
