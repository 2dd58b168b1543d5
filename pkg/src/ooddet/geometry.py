"""Axis-aligned box arithmetic.

Boxes use continuous image coordinates ``(x1, y1, x2, y2)`` with ``(x1, y1)``
the top-left corner. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle; zero-area boxes are allowed."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return box_area(self)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def clip(self, x1: float, y1: float, x2: float, y2: float) -> BoundingBox | None:
        """Intersection with the window ``[x1, x2] x [y1, y2]``, or None if empty."""
        nx1, ny1 = max(self.x1, x1), max(self.y1, y1)
        nx2, ny2 = min(self.x2, x2), min(self.y2, y2)
        if nx1 > nx2 or ny1 > ny2:
            return None
        return BoundingBox(nx1, ny1, nx2, ny2)

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> BoundingBox:
        x1, y1, x2, y2 = (float(v) for v in seq)
        return cls(x1, y1, x2, y2)


BoxSet = Sequence[BoundingBox]


def box_area(b: BoundingBox) -> float:
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def intersect_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when both boxes have zero area."""
    inter = intersect_area(a, b)
    union = box_area(a) + box_area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _covered_cells(boxes: list[BoundingBox]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs = np.unique([c for b in boxes for c in (b.x1, b.x2)])
    ys = np.unique([c for b in boxes for c in (b.y1, b.y2)])
    covered = np.zeros((len(ys) - 1, len(xs) - 1), dtype=bool)
    for b in boxes:
        i0, i1 = np.searchsorted(ys, (b.y1, b.y2))
        j0, j1 = np.searchsorted(xs, (b.x1, b.x2))
        covered[i0:i1, j0:j1] = True
    return xs, ys, covered


def union_area(boxes: Iterable[BoundingBox]) -> float:
    """Exact area covered by a set of boxes.

    The plane is cut along every box edge (coordinate compression); each cell
    of the resulting grid is either fully covered or fully uncovered, so the
    union area is the sum of the covered cell areas.
    """
    boxes = [b for b in boxes if b.x2 > b.x1 and b.y2 > b.y1]
    if not boxes:
        return 0.0
    if len(boxes) == 1:
        return box_area(boxes[0])
    xs, ys, covered = _covered_cells(boxes)
    # row-wise covered width, then weight by row height
    return float(np.dot(np.diff(ys), covered.astype(np.float64) @ np.diff(xs)))


def _union_area_rational(boxes: list[BoundingBox]) -> Fraction:
    boxes = [b for b in boxes if b.x2 > b.x1 and b.y2 > b.y1]
    if not boxes:
        return Fraction(0)
    xs, ys, covered = _covered_cells(boxes)
    fx = [Fraction(float(v)) for v in xs]
    fy = [Fraction(float(v)) for v in ys]
    total = Fraction(0)
    for i, row in enumerate(covered):
        cols = np.flatnonzero(row)
        if cols.size:
            width = sum((fx[j + 1] - fx[j] for j in cols), Fraction(0))
            total += width * (fy[i + 1] - fy[i])
    return total


def _rational_area(b: BoundingBox) -> Fraction:
    return (Fraction(b.x2) - Fraction(b.x1)) * (Fraction(b.y2) - Fraction(b.y1))


def _require_positive_area(pred: BoundingBox) -> Fraction:
    if box_area(pred) <= 0.0:
        raise ValueError(f"occupancy is undefined for a zero-area box: {pred}")
    return _rational_area(pred)


def _clip_all(pred: BoundingBox, gts: Iterable[BoundingBox]) -> list[BoundingBox]:
    return [c for g in gts if (c := g.clip(pred.x1, pred.y1, pred.x2, pred.y2)) is not None]


# Both occupancy ratios are evaluated in exact rational arithmetic and rounded
# once, so approx >= exact holds bit-for-bit, not just up to rounding.


def occupancy_target_exact(pred: BoundingBox, gts: Iterable[BoundingBox]) -> float:
    """Fraction of ``pred`` covered by the union of ``gts``."""
    area = _require_positive_area(pred)
    return float(_union_area_rational(_clip_all(pred, gts)) / area)


def occupancy_sum_ratio(pred: BoundingBox, gts: Iterable[BoundingBox]) -> float:
    """Sum of per-GT intersections over ``pred`` area, without clamping.

    Upper bound of :func:`occupancy_target_exact`; tight when the GT boxes do
    not overlap inside ``pred``.
    """
    area = _require_positive_area(pred)
    total = sum((_rational_area(c) for c in _clip_all(pred, gts)), Fraction(0))
    return float(total / area)


def occupancy_target_approx(pred: BoundingBox, gts: Iterable[BoundingBox]) -> float:
    """Upper-bound occupancy target, clamped to 1 so it stays a valid BCE target."""
    return min(1.0, occupancy_sum_ratio(pred, gts))
