"""Synthetic ground-truth worlds and brute-force reference computations.

A scene is a camera looking down a straight road: a constant far-depth band
above the horizon and a linear depth ramp below it. Objects stick out of the
road (constant depth equal to the road depth at their base row); ghosts are
appearance-only regions (road markings, shadows) that leave depth untouched
and are never annotated.

Ramp steepness contract: with a Sobel kernel of 5 a ramp of ``slope`` depth
units per row yields an interior response of ``128 * slope`` and ``64 * slope``
on the replicated bottom border row. The default slope of 0.25 keeps every
road pixel at or above 16, clear of the default change threshold of 10.
Edge-replicated closing flattens the last few rows of the ramp (the window
sees only replicated border values), so ghosts keep ``bottom_margin`` rows
clear of the bottom border.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import PipelineConfig, dump_config
from .detection import OOD_LABEL, Detection
from .geometry import BoundingBox
from .metrics import GroundTruth, ImageGT

# Margin kept between ghosts and objects so Sobel/closing bands of an object
# never reach into a ghost box.
_GHOST_CLEARANCE = 8


@dataclass(frozen=True)
class SceneParams:
    width: int = 384
    height: int = 192
    horizon: float = 0.4  # fraction of the height above the road
    far_depth: float = 80.0
    slope: float = 0.25  # depth units per row below the horizon
    n_objects: tuple[int, int] = (1, 5)  # inclusive range
    n_ghosts: tuple[int, int] = (1, 5)
    object_size: tuple[int, int] = (16, 48)
    ghost_width: tuple[int, int] = (16, 64)
    ghost_height: tuple[int, int] = (8, 24)
    bottom_margin: int = 10  # >= closing kernel size
    num_classes: int = 8
    unknown_fraction: float = 0.5

    @property
    def horizon_row(self) -> int:
        return int(round(self.horizon * self.height))

    def road_depth(self, row: float) -> float:
        return self.far_depth - self.slope * max(0.0, row - self.horizon_row)


@dataclass(frozen=True)
class SceneObject:
    box: BoundingBox
    label: int  # class index or OOD_LABEL
    depth: float
    is_3d: bool = True

    @property
    def known(self) -> bool:
        return self.label != OOD_LABEL


@dataclass
class Scene:
    params: SceneParams
    seed: int
    objects: list[SceneObject] = field(default_factory=list)
    ghosts: list[BoundingBox] = field(default_factory=list)

    @property
    def size(self) -> tuple[int, int]:
        return self.params.width, self.params.height

    def ground_truth(self) -> ImageGT:
        """Annotations (3-D objects only) with the road as the RoI."""
        return ImageGT(
            objects=[GroundTruth(o.box, o.label, o.known) for o in self.objects],
            roi=road_mask(self.params),
        )


def road_mask(params: SceneParams) -> np.ndarray:
    mask = np.zeros((params.height, params.width), dtype=bool)
    mask[params.horizon_row :] = True
    return mask


def ground_depth(params: SceneParams) -> np.ndarray:
    rows = np.arange(params.height, dtype=np.float64)
    col = params.far_depth - params.slope * np.clip(rows - params.horizon_row, 0.0, None)
    return np.repeat(col[:, None], params.width, axis=1)


def render_depth(scene: Scene) -> np.ndarray:
    """Road ramp with objects painted in; where objects overlap the nearer one wins."""
    depth = ground_depth(scene.params)
    for o in scene.objects:
        b = o.box
        r0, r1, c0, c1 = int(b.y1), int(b.y2), int(b.x1), int(b.x2)
        np.minimum(depth[r0:r1, c0:c1], o.depth, out=depth[r0:r1, c0:c1])
    return depth.astype(np.float32)


def render_rgb(scene: Scene) -> np.ndarray:
    p = scene.params
    img = np.empty((p.height, p.width, 3), dtype=np.uint8)
    img[: p.horizon_row] = (135, 170, 210)
    img[p.horizon_row :] = (70, 70, 70)
    for g in scene.ghosts:
        img[int(g.y1) : int(g.y2), int(g.x1) : int(g.x2)] = (235, 235, 235)
    palette = np.random.default_rng(scene.seed).integers(40, 255, size=(len(scene.objects), 3))
    # far objects first so near ones overwrite them
    for o, color in sorted(zip(scene.objects, palette), key=lambda t: -t[0].depth):
        b = o.box
        img[int(b.y1) : int(b.y2), int(b.x1) : int(b.x2)] = color
    return img


def _expand(b: BoundingBox, m: float) -> BoundingBox:
    return BoundingBox(b.x1 - m, b.y1 - m, b.x2 + m, b.y2 + m)


def _overlaps(a: BoundingBox, b: BoundingBox) -> bool:
    return a.x1 < b.x2 and b.x1 < a.x2 and a.y1 < b.y2 and b.y1 < a.y2


def generate_scene(params: SceneParams = SceneParams(), seed: int = 0) -> Scene:
    """Deterministic random scene.

    Objects stand on the road (base row below the horizon); ghosts lie fully
    on the road, above the bottom margin, and keep a clearance from every
    object. All box corners are integers.
    """
    rng = np.random.default_rng(seed)
    hz = params.horizon_row
    w, h = params.width, params.height
    lo, hi = params.object_size

    objects = []
    for _ in range(rng.integers(params.n_objects[0], params.n_objects[1] + 1)):
        ow = int(rng.integers(lo, hi + 1))
        oh = int(rng.integers(lo, hi + 1))
        y2 = int(rng.integers(min(hz + lo, h), h + 1))
        y1 = max(0, y2 - oh)
        x1 = int(rng.integers(0, w - ow + 1))
        box = BoundingBox(float(x1), float(y1), float(x1 + ow), float(y2))
        if rng.random() < params.unknown_fraction:
            label = OOD_LABEL
        else:
            label = int(rng.integers(0, params.num_classes))
        objects.append(SceneObject(box, label, params.road_depth(y2 - 1)))

    ghosts: list[BoundingBox] = []
    target = int(rng.integers(params.n_ghosts[0], params.n_ghosts[1] + 1))
    attempts = 0
    while len(ghosts) < target and attempts < 200:
        attempts += 1
        gw = int(rng.integers(params.ghost_width[0], params.ghost_width[1] + 1))
        gh = int(rng.integers(params.ghost_height[0], params.ghost_height[1] + 1))
        y_max = h - params.bottom_margin - gh
        if gw > w or y_max < hz:
            break
        x1 = int(rng.integers(0, w - gw + 1))
        y1 = int(rng.integers(hz, y_max + 1))
        g = BoundingBox(float(x1), float(y1), float(x1 + gw), float(y1 + gh))
        if any(_overlaps(_expand(o.box, _GHOST_CLEARANCE), g) for o in objects):
            continue
        ghosts.append(g)
    return Scene(params, seed, objects, ghosts)


def plant_detections(
    scene: Scene,
    *,
    known_sco: float = 0.8,
    unknown_sco: float = 0.4,
    rescued_fraction: float = 0.5,
    rescued_occ: float = 0.3,
    ghost_sco: float = 0.6,
    ghost_copies: int = 1,
    noise: int = 3,
    seed: int | None = None,
) -> list[Detection]:
    """Raw detector output for a scene, before any filtering.

    Every object gets one detection exactly on its box. Unknown objects are
    split between the standard path (OOD class, ``sco = unknown_sco``) and
    the occupancy-rescue path (``sco < 0.01``, ``occ = rescued_occ``). Each
    ghost yields ``ghost_copies`` OOD detections on its box (copies shrink by
    one pixel per side each time, staying inside the ghost). ``noise``
    detections fall below both filter thresholds.
    """
    rng = np.random.default_rng(scene.seed if seed is None else seed)
    n_cls = scene.params.num_classes
    dets = []
    for o in scene.objects:
        if o.known:
            scores = [0.0] * (n_cls + 1)
            scores[o.label] = known_sco
            dets.append(Detection(o.box, sco=known_sco, occ=0.9, label=o.label, class_scores=tuple(scores)))
        elif rng.random() < rescued_fraction:
            dets.append(Detection(o.box, sco=0.005, occ=rescued_occ, label=OOD_LABEL))
        else:
            dets.append(Detection(o.box, sco=unknown_sco, occ=0.5, label=OOD_LABEL))
    for g in scene.ghosts:
        for c in range(ghost_copies):
            s = min(c, int((min(g.width, g.height) - 2) // 2))
            box = BoundingBox(g.x1 + s, g.y1 + s, g.x2 - s, g.y2 - s)
            dets.append(Detection(box, sco=ghost_sco, occ=0.2, label=OOD_LABEL))
    w, h = scene.size
    for _ in range(noise):
        x1 = float(rng.integers(0, w - 8))
        y1 = float(rng.integers(0, h - 8))
        dets.append(Detection(BoundingBox(x1, y1, x1 + 8, y1 + 8), sco=0.001, occ=0.001, label=OOD_LABEL))
    return dets


def raster_occupancy_oracle(pred: BoundingBox, gts: list[BoundingBox], resolution: int = 512) -> float:
    """Brute-force occupancy: share of a ``resolution x resolution`` sample grid over
    ``pred`` (cell centers) that falls inside any GT box."""
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    if pred.area <= 0:
        raise ValueError("pred must have positive area")
    t = (np.arange(resolution) + 0.5) / resolution
    xs = pred.x1 + t * pred.width
    ys = pred.y1 + t * pred.height
    covered = np.zeros((resolution, resolution), dtype=bool)
    for g in gts:
        in_x = (xs >= g.x1) & (xs < g.x2)
        in_y = (ys >= g.y1) & (ys < g.y2)
        covered |= in_y[:, None] & in_x[None, :]
    return float(covered.mean())


def write_dataset(
    out_dir,
    n_images: int,
    seed: int = 0,
    params: SceneParams = SceneParams(),
    depth_format: str = "png",
    depth_scale: float = 1 / 64,
    **plant_kwargs,
):
    """Write scenes in the harness interchange formats plus a ready-to-run config.

    Layout: ``detections.jsonl``, ``ground_truth.jsonl``, ``depth/<id>.<fmt>``,
    ``roi/<id>.png``, ``rgb/<id>.png`` and ``config.yaml``. Returns the config path.
    Depth is stored as 16-bit ``depth / depth_scale``; the default power-of-two
    scale keeps the quarter-unit ramp exact.
    """
    out = Path(out_dir)
    for sub in ("depth", "roi", "rgb"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    dets, gts = {}, {}
    for i in range(n_images):
        image_id = f"{i:05d}"
        scene = generate_scene(params, seed + i)
        gt = scene.ground_truth()
        gts[image_id] = gt.objects
        dets[image_id] = plant_detections(scene, **plant_kwargs)
        io.save_depth(out / "depth" / f"{image_id}.{depth_format}", render_depth(scene), depth_scale)
        io.save_mask(out / "roi" / f"{image_id}.png", gt.roi)
        io.save_rgb(out / "rgb" / f"{image_id}.png", render_rgb(scene))
    io.write_detections(out / "detections.jsonl", dets)
    io.write_ground_truth(out / "ground_truth.jsonl", gts)
    cfg = PipelineConfig(
        detections=Path("detections.jsonl"),
        ground_truth=Path("ground_truth.jsonl"),
        depth=f"depth/{{image_id}}.{depth_format}",
        roi="roi/{image_id}.png",
        depth_scale=depth_scale,
    )
    path = out / "config.yaml"
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path
