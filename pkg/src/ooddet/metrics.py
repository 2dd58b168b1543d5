"""Open-world detection metrics: unknown recall, RoI false-positive rate, known-class AP.

All per-image inputs are sequences indexed by image; detections of one image
are a list of :class:`~ooddet.detection.Detection`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detection import OOD_LABEL, Detection
from .geometry import BoundingBox, iou
from .scoring import budget_top_k

logger = logging.getLogger(__name__)

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class GroundTruth:
    box: BoundingBox
    label: int
    known: bool = True


@dataclass
class ImageGT:
    """Annotations of one image plus an optional exhaustive-annotation region."""

    objects: list[GroundTruth] = field(default_factory=list)
    roi: np.ndarray | None = None

    @property
    def unknown_boxes(self) -> list[BoundingBox]:
        return [g.box for g in self.objects if not g.known]

    @property
    def all_boxes(self) -> list[BoundingBox]:
        return [g.box for g in self.objects]


@dataclass(frozen=True)
class MatchResult:
    det_to_gt: tuple[int, ...]  # per detection (input order), GT index or -1
    gt_to_det: tuple[int, ...]  # per GT, detection index or -1

    @property
    def num_matched(self) -> int:
        return sum(1 for g in self.gt_to_det if g >= 0)


def match_detections(
    dets: Sequence[Detection], gts: Sequence[BoundingBox], iou_thr: float = 0.5
) -> MatchResult:
    """Greedy one-to-one matching.

    Detections are visited in descending ranking score (ties by input order);
    each takes the unmatched GT with the highest IoU, provided IoU >= iou_thr.
    IoU ties go to the lower GT index.
    """
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError(f"iou_thr must be in (0, 1], got {iou_thr}")
    det_to_gt = [-1] * len(dets)
    gt_to_det = [-1] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    for i in order:
        best, best_iou = -1, iou_thr
        for j, g in enumerate(gts):
            if gt_to_det[j] >= 0:
                continue
            v = iou(dets[i].box, g)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = j, v
        if best >= 0:
            det_to_gt[i] = best
            gt_to_det[best] = i
    return MatchResult(tuple(det_to_gt), tuple(gt_to_det))


def recall_at_k(
    dets_per_image: Sequence[Sequence[Detection]],
    unknown_gts_per_image: Sequence[Sequence[BoundingBox]],
    k: int = 100,
    iou_thr: float = 0.5,
) -> float | None:
    """Percentage of unknown GT matched by the top-``k`` OOD detections per image.

    Returns None when there is no unknown GT at all.
    """
    total = sum(len(g) for g in unknown_gts_per_image)
    if total == 0:
        return None
    matched = 0
    for dets, gts in zip(dets_per_image, unknown_gts_per_image, strict=True):
        kept = budget_top_k(dets, k, "unknown")
        matched += match_detections(kept, gts, iou_thr).num_matched
    return 100.0 * matched / total


def roi_fraction(box: BoundingBox, roi: np.ndarray) -> float:
    """Exact fraction of the box area lying on true pixels of ``roi``.

    Pixel ``(r, c)`` is the unit square ``[c, c+1] x [r, r+1]``.
    """
    area = box.area
    if area <= 0.0:
        return 0.0
    h, w = roi.shape
    c0, c1 = max(0, int(np.floor(box.x1))), min(w, int(np.ceil(box.x2)))
    r0, r1 = max(0, int(np.floor(box.y1))), min(h, int(np.ceil(box.y2)))
    if c1 <= c0 or r1 <= r0:
        return 0.0
    cols = np.arange(c0, c1, dtype=np.float64)
    rows = np.arange(r0, r1, dtype=np.float64)
    wx = np.clip(np.minimum(cols + 1, box.x2) - np.maximum(cols, box.x1), 0.0, None)
    wy = np.clip(np.minimum(rows + 1, box.y2) - np.maximum(rows, box.y1), 0.0, None)
    inside = float(wy @ roi[r0:r1, c0:c1].astype(np.float64) @ wx)
    return inside / area


def false_positives_in_roi(
    dets: Sequence[Detection],
    gts: Sequence[BoundingBox],
    roi: np.ndarray,
    iou_thr: float = 0.5,
    roi_min_fraction: float = 0.5,
) -> int:
    """Number of detections that lie in the RoI and overlap no GT at ``iou_thr``.

    A detection counts as inside the RoI when at least ``roi_min_fraction`` of
    its area is on RoI pixels. Overlap is tested against every GT (not a
    one-to-one assignment), so a detection on an annotated object is never a
    false positive.
    """
    fp = 0
    for d in dets:
        if roi_fraction(d.box, roi) < roi_min_fraction:
            continue
        if all(iou(d.box, g) < iou_thr for g in gts):
            fp += 1
    return fp


def fpr_at_k(
    dets_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence[BoundingBox]],
    rois: Sequence[np.ndarray | None],
    k: int = 100,
    iou_thr: float = 0.5,
    roi_min_fraction: float = 0.5,
) -> float | None:
    """False positives per mille of the detection budget: ``1000 * FP / (N * k)``.

    ``N`` counts images that have a RoI; images without one are skipped with a
    log message. Returns None if no image has a RoI.
    """
    fp = 0
    n_images = 0
    for i, (dets, gts, roi) in enumerate(zip(dets_per_image, gts_per_image, rois, strict=True)):
        if roi is None:
            logger.info("FPR@%d: image %d has no RoI mask, skipped", k, i)
            continue
        n_images += 1
        kept = budget_top_k(dets, k, "unknown")
        fp += false_positives_in_roi(kept, gts, roi, iou_thr, roi_min_fraction)
    if n_images == 0:
        return None
    return 1000.0 * fp / (n_images * k)


def _interpolated_ap(tp: np.ndarray, num_gt: int) -> float:
    """101-point interpolated AP in [0, 1] from a score-sorted TP indicator."""
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / num_gt
    precision = ctp / (ctp + cfp)
    # precision envelope, non-increasing in recall
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < precision.size, precision[np.minimum(idx, precision.size - 1)], 0.0)
    return float(sampled.mean())


def average_precision(
    dets_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence[GroundTruth]],
    cls: int,
    iou_thr: float = 0.5,
) -> float | None:
    """AP (percent) of one class at one IoU threshold; None if the class has no GT."""
    num_gt = 0
    records: list[tuple[float, int, int, bool]] = []
    for img, (dets, gts) in enumerate(zip(dets_per_image, gts_per_image, strict=True)):
        cls_gts = [g.box for g in gts if g.label == cls]
        num_gt += len(cls_gts)
        cls_dets = [d for d in dets if d.label == cls]
        match = match_detections(cls_dets, cls_gts, iou_thr)
        for j, d in enumerate(cls_dets):
            records.append((d.score, img, j, match.det_to_gt[j] >= 0))
    if num_gt == 0:
        return None
    # global ranking: score descending, then image and in-image order
    records.sort(key=lambda r: (-r[0], r[1], r[2]))
    tp = np.array([r[3] for r in records], dtype=bool)
    return 100.0 * _interpolated_ap(tp, num_gt)


@dataclass
class MapResult:
    map: float | None
    ap50: float | None
    per_class: dict[int, dict[str, float]]


def map_known(
    dets_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence[GroundTruth]],
    iou_thresholds: Sequence[float] = COCO_IOU_THRESHOLDS,
) -> MapResult:
    """Mean AP over known classes present in the GT and over ``iou_thresholds``."""
    classes = sorted({g.label for gts in gts_per_image for g in gts if g.known and g.label != OOD_LABEL})
    known_dets = [[d for d in dets if not d.is_ood] for dets in dets_per_image]
    per_class: dict[int, dict[str, float]] = {}
    for c in classes:
        aps = [average_precision(known_dets, gts_per_image, c, t) for t in iou_thresholds]
        ap50 = average_precision(known_dets, gts_per_image, c, 0.5)
        per_class[c] = {"ap": float(np.mean(aps)), "ap50": ap50}
    if not per_class:
        return MapResult(None, None, {})
    return MapResult(
        map=float(np.mean([v["ap"] for v in per_class.values()])),
        ap50=float(np.mean([v["ap50"] for v in per_class.values()])),
        per_class=per_class,
    )
