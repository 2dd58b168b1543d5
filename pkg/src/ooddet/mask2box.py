"""Dense masks and anomaly-score maps to boxes."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage

from .detection import OOD_LABEL, Detection
from .geometry import BoundingBox

# 8-connectivity
_STRUCTURE = np.ones((3, 3), dtype=bool)

DEFAULT_GRID_SIZE = 16


def threshold_binarize(scores: np.ndarray, t: float) -> np.ndarray:
    """Boolean mask of pixels with ``score >= t``."""
    return np.asarray(scores) >= t


def _label(mask: np.ndarray) -> tuple[np.ndarray, int]:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    labels, n = ndimage.label(mask, structure=_STRUCTURE)
    if n <= 1:
        return labels, n
    # canonical order: by raster index of each component's first pixel
    flat = labels.ravel()
    first = np.full(n + 1, flat.size, dtype=np.int64)
    nz = np.flatnonzero(flat)
    np.minimum.at(first, flat[nz], nz)
    order = np.argsort(first[1:], kind="stable") + 1
    remap = np.zeros(n + 1, dtype=labels.dtype)
    remap[order] = np.arange(1, n + 1, dtype=labels.dtype)
    return remap[labels], n


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components of ``mask`` as ``(n, 2)`` arrays of ``(row, col)``.

    Components are ordered by their first pixel in row-major order; pixels
    within a component are in row-major order too.
    """
    labels, n = _label(mask)
    if n == 0:
        return []
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    groups = np.argsort(flat[idx], kind="stable")
    idx = idx[groups]
    bounds = np.searchsorted(flat[idx], np.arange(1, n + 2))
    w = labels.shape[1]
    return [
        np.stack(np.divmod(idx[bounds[i]:bounds[i + 1]], w), axis=1)
        for i in range(n)
    ]


def component_to_box(comp: np.ndarray) -> BoundingBox:
    """Tight box around pixel ``(row, col)`` coordinates; pixel extents are inclusive."""
    comp = np.asarray(comp)
    if comp.size == 0:
        raise ValueError("cannot box an empty component")
    rows, cols = comp[:, 0], comp[:, 1]
    return BoundingBox(
        float(cols.min()), float(rows.min()), float(cols.max() + 1), float(rows.max() + 1)
    )


def mask_to_boxes(mask: np.ndarray) -> list[BoundingBox]:
    """Boxes of all components, in canonical component order."""
    labels, n = _label(mask)
    boxes = []
    for sl in ndimage.find_objects(labels, max_label=n):
        rs, cs = sl
        boxes.append(BoundingBox(float(cs.start), float(rs.start), float(cs.stop), float(rs.stop)))
    return boxes


def default_thresholds(scores: np.ndarray, n: int = DEFAULT_GRID_SIZE) -> list[float]:
    """``n`` uniformly spaced quantiles of the score map (midpoint levels)."""
    levels = (np.arange(n) + 0.5) / n
    return sorted(set(float(q) for q in np.quantile(np.asarray(scores, dtype=np.float64), levels)))


def multi_threshold_boxes(scores: np.ndarray, thresholds: Sequence[float] | None = None) -> list[Detection]:
    """One OOD detection per blob per threshold, scored by that threshold.

    Results of all thresholds are concatenated in ascending threshold order;
    nested boxes from different thresholds are all kept.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError(f"score map must be 2-D, got shape {scores.shape}")
    if not np.isfinite(scores).all():
        raise ValueError("score map contains non-finite values")
    if thresholds is None:
        thresholds = default_thresholds(scores)
    if len(thresholds) == 0:
        raise ValueError("at least one threshold is required")

    dets = []
    for t in sorted(thresholds):
        # detection scores live in [0, 1]; thresholds outside are clamped for the score only
        s = min(max(float(t), 0.0), 1.0)
        for box in mask_to_boxes(threshold_binarize(scores, t)):
            dets.append(Detection(box=box, sco=s, occ=s, label=OOD_LABEL))
    return dets
