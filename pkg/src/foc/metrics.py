"""Stage scores: counting error, mask overlap, detection PRF/AP and completeness."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NoObjects, ZeroGroundTruth
from .imaging import BoundingBox, box_iou

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CountPair:
    ground_truth_count: int
    predicted_count: int

    def __post_init__(self):
        if self.ground_truth_count < 0 or self.predicted_count < 0:
            raise ValueError("object counts must be non-negative")


@dataclass(frozen=True)
class DetectionEvalResult:
    tp: int
    fp: int
    fn: int
    map50: Optional[float] = None

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)

    def __add__(self, other: "DetectionEvalResult") -> "DetectionEvalResult":
        return DetectionEvalResult(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class CompletenessReport:
    total_images: int
    completely_inpainted: int
    percentage: int = field(init=False)

    def __post_init__(self):
        if not 0 <= self.completely_inpainted <= self.total_images:
            raise ValueError("completely_inpainted must lie in [0, total_images]")
        pct = (100 * self.completely_inpainted) // self.total_images if self.total_images else 0
        object.__setattr__(self, "percentage", pct)

    @property
    def fraction(self) -> float:
        return self.completely_inpainted / self.total_images if self.total_images else 0.0

    def to_json(self) -> dict:
        return {"total_images": self.total_images,
                "completely_inpainted": self.completely_inpainted,
                "percentage": self.percentage}


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


# -- masks ------------------------------------------------------------------

def overlap_metrics(a, b) -> Tuple[float, float, float]:
    """(dice, iou, pixel_accuracy) of two binary masks.

    Two empty masks agree perfectly: dice = iou = 1.
    """
    a = np.asarray(a) > 0
    b = np.asarray(b) > 0
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a & b))
    na, nb = int(np.count_nonzero(a)), int(np.count_nonzero(b))
    union = na + nb - inter
    dice = 2 * inter / (na + nb) if na + nb else 1.0
    iou = inter / union if union else 1.0
    accuracy = float(np.count_nonzero(a == b)) / a.size
    return dice, iou, accuracy


def dice(a, b) -> float:
    return overlap_metrics(a, b)[0]


def mdoc(pairs: Sequence) -> float:
    """Signed counting error relative to the total ground-truth count.

    Negative values mean over-detection.
    """
    pairs = [p if isinstance(p, CountPair) else CountPair(*p) for p in pairs]
    total = sum(p.ground_truth_count for p in pairs)
    if total == 0:
        raise ZeroGroundTruth("sum of ground-truth counts is zero")
    diff = sum(p.ground_truth_count - p.predicted_count for p in pairs)
    return diff / total


def match_objects(gts: Sequence, preds: Sequence) -> Tuple[List[Tuple[int, int, float]], List[int], List[int]]:
    """Greedy maximum-Dice pairing within one sample.

    Pairs are taken in order of decreasing Dice (ties: lower gt index, then
    lower prediction index); only pairs with positive overlap are matched.
    Returns (matches, unmatched_gt, unmatched_pred).
    """
    scored = []
    for i, g in enumerate(gts):
        for j, p in enumerate(preds):
            d = dice(g, p)
            if d > 0:
                scored.append((-d, i, j))
    scored.sort()
    used_g, used_p, matches = set(), set(), []
    for neg_d, i, j in scored:
        if i in used_g or j in used_p:
            continue
        used_g.add(i)
        used_p.add(j)
        matches.append((i, j, -neg_d))
    unmatched_g = [i for i in range(len(gts)) if i not in used_g]
    unmatched_p = [j for j in range(len(preds)) if j not in used_p]
    return matches, unmatched_g, unmatched_p


def sample_dice_terms(gts: Sequence, preds: Sequence) -> List[float]:
    matches, ug, up = match_objects(gts, preds)
    return [d for _, _, d in matches] + [0.0] * (len(ug) + len(up))


def avg_dice(samples: Sequence[Tuple[Sequence, Sequence]]) -> float:
    """Mean Dice over every paired object in every sample.

    ``samples`` holds one ``(ground_truth_masks, predicted_masks)`` pair per
    image, all in full-image coordinates. Unmatched objects on either side
    count as Dice 0.
    """
    terms: List[float] = []
    for gts, preds in samples:
        terms.extend(sample_dice_terms(gts, preds))
    if not terms:
        raise NoObjects("no objects in any sample")
    return math.fsum(terms) / len(terms)


# -- detection --------------------------------------------------------------

def _claim_best(box: BoundingBox, gts: Sequence[BoundingBox], free: List[bool],
                iou_threshold: float) -> bool:
    """Mark the free ground truth of highest IoU >= threshold as used.

    Ties go to the lower ground-truth index.
    """
    best, best_iou = None, iou_threshold
    for g, gt in enumerate(gts):
        if not free[g]:
            continue
        iou = box_iou(box, gt)
        if iou >= best_iou and (best is None or iou > best_iou):
            best, best_iou = g, iou
    if best is None:
        return False
    free[best] = False
    return True


def evaluate_detections(preds: Sequence, gts: Sequence[BoundingBox],
                        iou_threshold: float = 0.5) -> DetectionEvalResult:
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    gts = list(gts)
    free = [True] * len(gts)
    ranked = sorted(preds, key=lambda d: (-d.confidence, d.box.as_list()))
    tp = sum(_claim_best(d.box, gts, free, iou_threshold) for d in ranked)
    return DetectionEvalResult(tp=tp, fp=len(ranked) - tp, fn=len(gts) - tp)


def evaluate_detection_set(preds_by_image: dict, gts_by_image: dict,
                           iou_threshold: float = 0.5) -> DetectionEvalResult:
    """Sum of per-image results plus AP over the whole set."""
    total = DetectionEvalResult(0, 0, 0)
    for image_id in sorted(set(preds_by_image) | set(gts_by_image)):
        total = total + evaluate_detections(preds_by_image.get(image_id, []),
                                            gts_by_image.get(image_id, []), iou_threshold)
    pred_pairs = [(d, k) for k, ds in preds_by_image.items() for d in ds]
    gt_pairs = [(b, k) for k, bs in gts_by_image.items() for b in bs]
    ap = average_precision_50(pred_pairs, gt_pairs, iou_threshold)
    return DetectionEvalResult(total.tp, total.fp, total.fn, ap)


def ranked_pr_curve(preds: Sequence[Tuple[object, Hashable]],
                    gts: Sequence[Tuple[BoundingBox, Hashable]],
                    iou_threshold: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """Recall and precision after each prefix of the confidence ranking.

    Both arrays start with the (0, 0) point. ``preds`` are
    ``(Detection, image_id)`` and ``gts`` are ``(BoundingBox, image_id)``.
    """
    gt_by_image: dict = {}
    for box, image_id in gts:
        gt_by_image.setdefault(image_id, []).append(box)
    free = {k: [True] * len(v) for k, v in gt_by_image.items()}

    # equal confidences rank by (image_id, box) so input order never matters
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][0].confidence, str(preds[i][1]),
                                                    preds[i][0].box.as_list()))
    tp_flags = []
    for i in order:
        det, image_id = preds[i]
        if image_id not in gt_by_image:
            tp_flags.append(False)
            continue
        tp_flags.append(_claim_best(det.box, gt_by_image[image_id], free[image_id], iou_threshold))

    tp = np.cumsum(tp_flags, dtype=np.float64)
    fp = np.cumsum([not f for f in tp_flags], dtype=np.float64)
    recall = np.concatenate(([0.0], tp / max(len(gts), 1)))
    precision = np.concatenate(([0.0], tp / np.maximum(tp + fp, 1)))
    return recall, precision


def average_precision_50(preds: Sequence[Tuple[object, Hashable]],
                         gts: Sequence[Tuple[BoundingBox, Hashable]],
                         iou_threshold: float = 0.5) -> float:
    """All-point interpolated AP for a single class (so mAP = AP)."""
    if not gts:
        log.warning("average precision requested with no ground truths; returning 0")
        return 0.0
    recall, precision = ranked_pr_curve(preds, gts, iou_threshold)
    # precision envelope: best precision at any recall >= the current one
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.nonzero(recall[1:] != recall[:-1])[0] + 1
    return float(np.sum((recall[steps] - recall[steps - 1]) * envelope[steps]))


def lung_filter(boxes_or_dets: Sequence, lung_mask) -> list:
    """Keep items whose box center falls on a positive lung-mask pixel."""
    lung = np.asarray(lung_mask) > 0
    h, w = lung.shape
    kept = []
    for item in boxes_or_dets:
        box = getattr(item, "box", item)
        cx, cy = box.center
        col, row = min(int(cx), w - 1), min(int(cy), h - 1)
        if lung[row, col]:
            kept.append(item)
    return kept


# -- inpainting -------------------------------------------------------------

def completeness_report(flags: Sequence[Tuple[str, bool]]) -> CompletenessReport:
    flags = list(flags)
    if not flags:
        raise EmptyInput("completeness needs at least one image")
    done = sum(1 for _, ok in flags if ok)
    return CompletenessReport(total_images=len(flags), completely_inpainted=done)
