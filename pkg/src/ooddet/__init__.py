"""Open-world detection post-processing: occupancy-based recall filtering,
depth-based false-positive reduction, mask-to-box conversion, mosaic/mixup
composition and RoI-aware benchmark metrics."""

from .depth import DfrConfig, depth_change_map, dfr_filter, flatness_proportion
from .detection import OOD_LABEL, Detection
from .geometry import (
    BoundingBox,
    box_area,
    intersect_area,
    iou,
    occupancy_target_approx,
    occupancy_target_exact,
    union_area,
)
from .scoring import FilterConfig, budget_top_k, ood_recall_enhancement, standard_filter

__all__ = [
    "BoundingBox",
    "Detection",
    "DfrConfig",
    "FilterConfig",
    "OOD_LABEL",
    "box_area",
    "budget_top_k",
    "depth_change_map",
    "dfr_filter",
    "flatness_proportion",
    "intersect_area",
    "iou",
    "occupancy_target_approx",
    "occupancy_target_exact",
    "ood_recall_enhancement",
    "standard_filter",
    "union_area",
]

__version__ = "0.1.0"
