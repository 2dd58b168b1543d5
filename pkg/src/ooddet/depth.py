"""Depth-based false-positive reduction.

A detection is kept when enough of its pixels show little vertical depth
change: surfaces that stick out of the ground plane are locally flat in
depth, while the road itself changes depth continuously towards the horizon.

Depth maps are 2-D ``float32`` arrays (rows = image y). ``change_threshold``
assumes depth values on an 8-bit-like scale; rescale inputs (see
``PipelineConfig.depth_scale``) so that the default of 10 is meaningful.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np
from scipy.special import comb

from .detection import Detection
from .geometry import BoundingBox

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DfrConfig:
    close_kernel: int = 10
    sobel_kernel: int = 5
    change_threshold: float = 10.0
    mu: float = 0.3

    def __post_init__(self) -> None:
        if self.close_kernel < 1:
            raise ValueError(f"close_kernel must be >= 1, got {self.close_kernel}")
        if self.sobel_kernel < 3 or self.sobel_kernel % 2 == 0:
            raise ValueError(f"sobel_kernel must be odd and >= 3, got {self.sobel_kernel}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu={self.mu} is outside [0, 1]")


def as_depth(d) -> np.ndarray:
    """Validate a depth raster and return it as contiguous float32."""
    arr = np.ascontiguousarray(d, dtype=np.float32)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"depth map must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all() or (arr < 0).any():
        raise ValueError("depth map must be finite and non-negative")
    return arr


def morphological_close(d: np.ndarray, k: int) -> np.ndarray:
    """Grey dilation then erosion with a flat ``k x k`` square, edge-replicated.

    For even ``k`` the erosion uses the reflected anchor so the pair is an
    adjunction and the closing stays idempotent.
    """
    if k < 1:
        raise ValueError(f"kernel must be >= 1, got {k}")
    d = np.ascontiguousarray(d, dtype=np.float32)
    if k == 1:
        return d.copy()
    kernel = np.ones((k, k), np.uint8)
    lo = k // 2
    hi = k - 1 - lo
    dilated = cv2.dilate(d, kernel, anchor=(lo, lo), borderType=cv2.BORDER_REPLICATE)
    return cv2.erode(dilated, kernel, anchor=(hi, hi), borderType=cv2.BORDER_REPLICATE)


def sobel_kernels(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Smoothing and first-derivative 1-D kernels of odd size ``k``.

    Smoothing is the binomial row of length ``k``; the derivative is the
    binomial row of length ``k - 2`` convolved with ``[-1, 0, 1]``.
    """
    if k < 3 or k % 2 == 0:
        raise ValueError(f"Sobel kernel size must be odd and >= 3, got {k}")
    smooth = np.array([comb(k - 1, i, exact=True) for i in range(k)], dtype=np.float64)
    base = np.array([comb(k - 3, i, exact=True) for i in range(k - 2)], dtype=np.float64)
    deriv = np.convolve(base, [-1.0, 0.0, 1.0])
    return smooth, deriv


def sobel_y(d: np.ndarray, k: int) -> np.ndarray:
    """Vertical Sobel derivative, positive where values grow downwards."""
    smooth, deriv = sobel_kernels(k)
    d = np.ascontiguousarray(d, dtype=np.float32)
    return cv2.sepFilter2D(
        d,
        cv2.CV_32F,
        smooth.astype(np.float32),
        deriv.astype(np.float32),
        borderType=cv2.BORDER_REPLICATE,
    )


def depth_change_map(d: np.ndarray, cfg: DfrConfig = DfrConfig()) -> np.ndarray:
    return sobel_y(morphological_close(as_depth(d), cfg.close_kernel), cfg.sobel_kernel)


def box_pixel_window(box: BoundingBox, shape: tuple[int, int]) -> tuple[int, int, int, int]:
    """Pixel rows/cols ``(r0, r1, c0, c1)`` touched by ``box``, clipped to ``shape``.

    Sub-pixel edges round outwards. Raises if no pixel remains.
    """
    h, w = shape
    c0 = max(0, math.floor(box.x1))
    r0 = max(0, math.floor(box.y1))
    c1 = min(w, math.ceil(box.x2))
    r1 = min(h, math.ceil(box.y2))
    if c1 <= c0 or r1 <= r0:
        raise ValueError(f"box {box.as_tuple()} covers no pixel of a {w}x{h} raster")
    return r0, r1, c0, c1


def flatness_proportion(c_map: np.ndarray, box: BoundingBox, cfg: DfrConfig = DfrConfig()) -> float:
    """Fraction of in-box pixels whose absolute depth change is below threshold."""
    r0, r1, c0, c1 = box_pixel_window(box, c_map.shape)
    patch = c_map[r0:r1, c0:c1]
    return float(np.count_nonzero(np.abs(patch) < cfg.change_threshold)) / patch.size


class FlatnessIndex:
    """Summed-area table of the flat-pixel mask for O(1) per-box proportions.

    Built once per frame; read-only afterwards, so lookups may run from
    several threads.
    """

    def __init__(self, c_map: np.ndarray, cfg: DfrConfig = DfrConfig()):
        self.shape = c_map.shape
        flat = (np.abs(c_map) < cfg.change_threshold).view(np.uint8)
        # (h+1, w+1) with a zero first row/column
        self._table = cv2.integral(flat, sdepth=cv2.CV_32S)

    def proportion(self, box: BoundingBox) -> float:
        r0, r1, c0, c1 = box_pixel_window(box, self.shape)
        t = self._table
        count = int(t[r1, c1]) - int(t[r0, c1]) - int(t[r1, c0]) + int(t[r0, c0])
        return count / ((r1 - r0) * (c1 - c0))


def dfr_filter(
    dets: Sequence[Detection],
    d: np.ndarray,
    cfg: DfrConfig = DfrConfig(),
    *,
    c_map: np.ndarray | None = None,
) -> list[Detection]:
    """Keep detections whose flatness proportion is at least ``cfg.mu``.

    Order is preserved. Boxes that cannot be evaluated (entirely outside the
    raster) are dropped with a warning. ``c_map`` may be passed to reuse a
    change map computed earlier for the same frame.
    """
    if c_map is None:
        c_map = depth_change_map(d, cfg)
    index = FlatnessIndex(c_map, cfg)
    kept = []
    for i, det in enumerate(dets):
        try:
            c = index.proportion(det.box)
        except ValueError as err:
            logger.warning("depth filter: rejecting detection %d: %s", i, err)
            continue
        if c >= cfg.mu:
            kept.append(det)
    return kept
