"""Filter -> depth filter -> budget -> metrics, over a set of images."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import ConfigError, PipelineConfig
from .depth import dfr_filter
from .detection import RECALL_ENHANCED, Detection
from .io import load_depth, load_detections, load_ground_truth, load_mask
from .metrics import (
    GroundTruth,
    false_positives_in_roi,
    fpr_at_k,
    map_known,
    match_detections,
    recall_at_k,
)
from .scoring import budget_top_k, ood_recall_enhancement

logger = logging.getLogger(__name__)

REPORT_FORMAT = "ooddet-report"


@dataclass
class ImageInput:
    image_id: str
    detections: list[Detection]
    ground_truth: list[GroundTruth] = field(default_factory=list)
    depth: np.ndarray | Path | None = None
    roi: np.ndarray | Path | None = None


@dataclass
class ImageResult:
    image_id: str
    kept: list[Detection]
    ground_truth: list[GroundTruth]
    roi: np.ndarray | None
    n_raw: int
    n_filtered: int
    n_recall_enhanced: int
    n_dfr_rejected: int


@dataclass
class EvalReport:
    n_images: int
    dfr_enabled: bool
    k: int
    iou_thr: float
    map_known: float | None
    ap50_known: float | None
    recall_at_k: float | None
    fpr_at_k: float | None
    per_class: dict[str, dict[str, float | None]]
    counts: dict[str, int]
    skipped: list[dict[str, str]] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": REPORT_FORMAT,
            "version": 1,
            "n_images": self.n_images,
            "dfr_enabled": self.dfr_enabled,
            "k": self.k,
            "iou_thr": self.iou_thr,
            "map_known": self.map_known,
            "ap50_known": self.ap50_known,
            "recall_at_k": self.recall_at_k,
            "fpr_at_k_permille": self.fpr_at_k,
            "per_class": self.per_class,
            "counts": self.counts,
            "skipped": self.skipped,
            "diagnostics": self.diagnostics,
        }

    def table(self) -> str:
        def fmt(v: float | None, unit: str) -> str:
            return "undefined" if v is None else f"{v:.2f} {unit}"

        rows = [
            ("images", str(self.n_images)),
            ("skipped", str(len(self.skipped))),
            ("depth filter", "on" if self.dfr_enabled else "off"),
            ("mAP (known)", fmt(self.map_known, "%")),
            ("AP50 (known)", fmt(self.ap50_known, "%")),
            (f"R@{self.k}", fmt(self.recall_at_k, "%")),
            (f"FPR@{self.k}", fmt(self.fpr_at_k, "permille")),
        ]
        for name, v in self.per_class.items():
            rows.append((f"  AP {name}", fmt(v["ap"], "%")))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{width}}  {b}" for a, b in rows) + "\n"


def _load_raster(value, loader, *args):
    if value is None or isinstance(value, np.ndarray):
        return value
    return loader(value, *args)


def process_image(item: ImageInput, cfg: PipelineConfig, dfr_enabled: bool) -> ImageResult:
    filtered = ood_recall_enhancement(item.detections, cfg.filter)
    kept = filtered
    if dfr_enabled:
        if item.depth is None:
            raise FileNotFoundError(f"no depth map for image {item.image_id}")
        depth = _load_raster(item.depth, load_depth, cfg.depth_scale)
        kept = dfr_filter(filtered, depth, cfg.dfr)
    roi = None
    if item.roi is not None:
        if isinstance(item.roi, Path) and not item.roi.exists():
            logger.info("image %s: RoI mask %s not found", item.image_id, item.roi)
        else:
            roi = _load_raster(item.roi, load_mask)
    return ImageResult(
        image_id=item.image_id,
        kept=kept,
        ground_truth=item.ground_truth,
        roi=roi,
        n_raw=len(item.detections),
        n_filtered=len(filtered),
        n_recall_enhanced=sum(1 for d in filtered if d.provenance == RECALL_ENHANCED),
        n_dfr_rejected=len(filtered) - len(kept),
    )


def evaluate(
    items: Sequence[ImageInput],
    cfg: PipelineConfig = PipelineConfig(),
    *,
    dfr_enabled: bool | None = None,
) -> EvalReport:
    """Run the per-image stages (possibly in parallel) and aggregate metrics in input order."""
    use_dfr = cfg.dfr_enabled if dfr_enabled is None else dfr_enabled

    def run(item: ImageInput):
        try:
            return process_image(item, cfg, use_dfr)
        except (OSError, ValueError) as err:
            logger.error("image %s skipped: %s", item.image_id, err)
            return err

    if cfg.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(run, items))
    else:
        outcomes = [run(item) for item in items]

    results: list[ImageResult] = []
    skipped = []
    for item, out in zip(items, outcomes):
        if isinstance(out, Exception):
            skipped.append({"image_id": item.image_id, "reason": str(out)})
        else:
            results.append(out)
    return _aggregate(results, skipped, cfg, use_dfr)


def _aggregate(results: list[ImageResult], skipped, cfg: PipelineConfig, use_dfr: bool) -> EvalReport:
    m = cfg.metrics
    dets = [r.kept for r in results]
    gts = [r.ground_truth for r in results]
    unknown_gts = [[g.box for g in gt if not g.known] for gt in gts]
    all_gt_boxes = [[g.box for g in gt] for gt in gts]
    rois = [r.roi for r in results]
    diagnostics = []

    recall = recall_at_k(dets, unknown_gts, m.k, m.iou_thr)
    if recall is None:
        diagnostics.append("no unknown ground truth: recall is undefined")
    fpr = fpr_at_k(dets, all_gt_boxes, rois, m.k, m.iou_thr, m.roi_min_fraction)
    if fpr is None:
        diagnostics.append("no RoI masks: FPR skipped")
    elif any(r is None for r in rois):
        diagnostics.append(f"{sum(r is None for r in rois)} image(s) without RoI excluded from FPR")

    known_budget = [budget_top_k(d, m.k, "known") for d in dets]
    maps = map_known(known_budget, gts)
    if maps.map is None:
        diagnostics.append("no known-class ground truth: mAP is undefined")

    matched = 0
    fp = 0
    for d, ug, ag, roi in zip(dets, unknown_gts, all_gt_boxes, rois):
        top = budget_top_k(d, m.k, "unknown")
        matched += match_detections(top, ug, m.iou_thr).num_matched
        if roi is not None:
            fp += false_positives_in_roi(top, ag, roi, m.iou_thr, m.roi_min_fraction)

    def class_name(c: int) -> str:
        return cfg.classes[c] if 0 <= c < len(cfg.classes) else str(c)

    counts = {
        "raw_detections": sum(r.n_raw for r in results),
        "after_filter": sum(r.n_filtered for r in results),
        "recall_enhanced": sum(r.n_recall_enhanced for r in results),
        "dfr_rejected": sum(r.n_dfr_rejected for r in results),
        "unknown_gt": sum(len(u) for u in unknown_gts),
        "unknown_matched": matched,
        "false_positives": fp,
        "images_with_roi": sum(r is not None for r in rois),
    }
    return EvalReport(
        n_images=len(results),
        dfr_enabled=use_dfr,
        k=m.k,
        iou_thr=m.iou_thr,
        map_known=maps.map,
        ap50_known=maps.ap50,
        recall_at_k=recall,
        fpr_at_k=fpr,
        per_class={class_name(c): v for c, v in maps.per_class.items()},
        counts=counts,
        skipped=skipped,
        diagnostics=diagnostics,
    )


def load_inputs(cfg: PipelineConfig) -> list[ImageInput]:
    """Images in order of first appearance (ground truth first, then detections)."""
    if cfg.detections is None or cfg.ground_truth is None:
        raise ConfigError("both 'detections' and 'ground_truth' paths are required")
    dets = load_detections(cfg.resolve(cfg.detections), cfg.classes)
    gts = load_ground_truth(cfg.resolve(cfg.ground_truth), cfg.classes)
    ids = list(gts) + [i for i in dets if i not in gts]
    items = []
    for image_id in ids:
        items.append(
            ImageInput(
                image_id=image_id,
                detections=dets.get(image_id, []),
                ground_truth=gts.get(image_id, []),
                depth=cfg.resolve(cfg.depth, image_id) if cfg.depth else None,
                roi=cfg.resolve(cfg.roi, image_id) if cfg.roi else None,
            )
        )
    return items


def run_pipeline(cfg: PipelineConfig, *, dfr_enabled: bool | None = None) -> EvalReport:
    use_dfr = cfg.dfr_enabled if dfr_enabled is None else dfr_enabled
    if use_dfr and not cfg.depth:
        raise ConfigError("depth filtering is enabled but no 'depth' path pattern is configured")
    return evaluate(load_inputs(cfg), cfg, dfr_enabled=use_dfr)
