"""Four-tile mosaic drawing from two datasets, and detection-style mixup."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .detection import OOD_LABEL
from .geometry import BoundingBox

AD_CLASSES = ("person", "rider", "car", "truck", "bus", "train", "motorcycle", "bicycle")

# Source-dataset names that share a concept with one of the driving classes.
_ALIASES = {
    "person": "person",
    "pedestrian": "person",
    "rider": "rider",
    "car": "car",
    "truck": "truck",
    "bus": "bus",
    "train": "train",
    "motorcycle": "motorcycle",
    "motorbike": "motorcycle",
    "bicycle": "bicycle",
    "bike": "bicycle",
}

MIN_BOX_AREA = 1.0


@dataclass(frozen=True)
class Annotation:
    box: BoundingBox
    label: int | str  # source label (str) before remapping, class index after


@dataclass
class LabeledImage:
    pixels: np.ndarray  # (H, W, 3) uint8
    annotations: list[Annotation] = field(default_factory=list)
    source: str = ""

    @property
    def size(self) -> tuple[int, int]:
        """``(width, height)``."""
        return self.pixels.shape[1], self.pixels.shape[0]


class LabelSpaceMap:
    """Total mapping from source labels to a known class index or OOD.

    ``explicit`` entries win; otherwise a label resolves through ``aliases``
    to one of ``classes``. With ``ood_fallback`` every other label maps to OOD,
    which keeps the map total; without it an unknown label raises KeyError.
    """

    def __init__(
        self,
        classes: Sequence[str] = AD_CLASSES,
        explicit: Mapping[str, int] | None = None,
        aliases: Mapping[str, str] | None = None,
        ood_fallback: bool = True,
    ):
        self.classes = tuple(classes)
        self.explicit = dict(explicit or {})
        self.aliases = dict(_ALIASES if aliases is None else aliases)
        self.ood_fallback = ood_fallback

    def __call__(self, source_label: int | str) -> int:
        if isinstance(source_label, (int, np.integer)):
            if source_label == OOD_LABEL or 0 <= source_label < len(self.classes):
                return int(source_label)
            raise KeyError(f"class index {source_label} outside the label space")
        key = str(source_label).strip().lower()
        if key in self.explicit:
            return self.explicit[key]
        name = self.aliases.get(key)
        if name in self.classes:
            return self.classes.index(name)
        if self.ood_fallback:
            return OOD_LABEL
        raise KeyError(f"unmapped source label {source_label!r}")


def remap_labels(img: LabeledImage, m: LabelSpaceMap) -> LabeledImage:
    return LabeledImage(
        pixels=img.pixels,
        annotations=[Annotation(a.box, m(a.label)) for a in img.annotations],
        source=img.source,
    )


def _resize(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    if pixels.shape[1] == width and pixels.shape[0] == height:
        return pixels
    return np.asarray(Image.fromarray(pixels).resize((width, height), Image.BILINEAR))


def _place(img: LabeledImage, quad: tuple[int, int, int, int]) -> tuple[np.ndarray, list[Annotation]]:
    """Scale ``img`` to cover the quadrant and center-crop it there."""
    qx1, qy1, qx2, qy2 = quad
    qw, qh = qx2 - qx1, qy2 - qy1
    w, h = img.size
    s = max(qw / w, qh / h)
    sw, sh = max(qw, round(w * s)), max(qh, round(h * s))
    scaled = _resize(img.pixels, sw, sh)
    # top-left corner of the scaled tile in canvas coordinates
    ox = qx1 - (sw - qw) // 2
    oy = qy1 - (sh - qh) // 2
    crop = scaled[qy1 - oy : qy1 - oy + qh, qx1 - ox : qx1 - ox + qw]

    sx, sy = sw / w, sh / h
    annotations = []
    for a in img.annotations:
        b = a.box
        moved = BoundingBox(b.x1 * sx + ox, b.y1 * sy + oy, b.x2 * sx + ox, b.y2 * sy + oy)
        clipped = moved.clip(qx1, qy1, qx2, qy2)
        if clipped is not None and clipped.area >= MIN_BOX_AREA:
            annotations.append(Annotation(clipped, a.label))
    return crop, annotations


def mosaic_plus(
    ad_imgs: Sequence[LabeledImage],
    ood_imgs: Sequence[LabeledImage],
    canvas: tuple[int, int],
    seed: int,
) -> LabeledImage:
    """2x2 mosaic of two driving-scene tiles and two auxiliary-dataset tiles.

    The split point is drawn uniformly from the middle half of each canvas
    axis and the four tiles are assigned to quadrants by a random
    permutation, both from ``seed``. Each tile is scaled to fill its quadrant
    and center-cropped, so a tile's center lands on its quadrant's center. Boxes are
    mapped with the tile transform, clipped to the quadrant and dropped when
    under one square pixel.
    """
    if len(ad_imgs) != 2 or len(ood_imgs) != 2:
        raise ValueError("mosaic_plus needs exactly 2 driving-scene and 2 auxiliary images")
    width, height = canvas
    if width < 2 or height < 2:
        raise ValueError(f"canvas too small: {canvas}")

    rng = np.random.default_rng(seed)
    cx = int(round(rng.uniform(0.25 * width, 0.75 * width)))
    cy = int(round(rng.uniform(0.25 * height, 0.75 * height)))
    cx = min(max(cx, 1), width - 1)
    cy = min(max(cy, 1), height - 1)
    tiles = list(ad_imgs) + list(ood_imgs)
    order = rng.permutation(4)

    quads = [(0, 0, cx, cy), (cx, 0, width, cy), (0, cy, cx, height), (cx, cy, width, height)]
    out = np.zeros((height, width, 3), dtype=np.uint8)
    annotations: list[Annotation] = []
    for q, tile_idx in enumerate(order):
        quad = quads[q]
        crop, anns = _place(tiles[tile_idx], quad)
        out[quad[1] : quad[3], quad[0] : quad[2]] = crop
        annotations.extend(anns)
    return LabeledImage(out, annotations, source="mosaic+")


def mixup_blend(composite: LabeledImage, ad_img: LabeledImage, lam: float) -> LabeledImage:
    """``lam * composite + (1 - lam) * ad_img``; both annotation sets are kept.

    ``ad_img`` is resized (boxes scaled along) when its size differs.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixup weight must be in [0, 1], got {lam}")
    width, height = composite.size
    other = _resize(ad_img.pixels, width, height)
    sx, sy = width / ad_img.size[0], height / ad_img.size[1]
    other_anns = [
        Annotation(BoundingBox(a.box.x1 * sx, a.box.y1 * sy, a.box.x2 * sx, a.box.y2 * sy), a.label)
        for a in ad_img.annotations
    ]
    blended = lam * composite.pixels.astype(np.float64) + (1.0 - lam) * other.astype(np.float64)
    pixels = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    return LabeledImage(pixels, list(composite.annotations) + other_anns, source="mixup")


def sample_mixup_lambda(rng: np.random.Generator, low: float = 0.4, high: float = 0.6) -> float:
    return float(rng.uniform(low, high))
