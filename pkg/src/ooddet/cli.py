"""Command-line entry point.

Exit codes: 0 clean success, 1 some items skipped, 2 fatal configuration or
input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .augment import (
    Annotation,
    LabeledImage,
    LabelSpaceMap,
    mixup_blend,
    mosaic_plus,
    remap_labels,
    sample_mixup_lambda,
)
from .bench import bench_runtime, dfr_stage, random_boxes
from .config import ConfigError, PipelineConfig, load_config
from .depth import depth_change_map, dfr_filter
from .detection import Detection
from .mask2box import default_thresholds, multi_threshold_boxes
from .metrics import GroundTruth
from .pipeline import run_pipeline
from .scoring import ood_recall_enhancement
from .synth import SceneParams, write_dataset

logger = logging.getLogger("ooddet")

EXIT_OK, EXIT_SKIPPED, EXIT_FATAL = 0, 1, 2


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def _base_config(args) -> PipelineConfig:
    return load_config(args.config) if args.config else PipelineConfig()


def _filter_cfg(cfg: PipelineConfig, args):
    changes = {k: v for k, v in (("mu_sco", args.mu_sco), ("mu_occ", args.mu_occ)) if v is not None}
    return replace(cfg.filter, **changes) if changes else cfg.filter


def _dfr_cfg(cfg: PipelineConfig, args):
    changes = {
        k: v
        for k, v in (("mu", args.mu), ("change_threshold", args.change_threshold))
        if v is not None
    }
    return replace(cfg.dfr, **changes) if changes else cfg.dfr


def cmd_filter(args) -> int:
    cfg = _base_config(args)
    fcfg = _filter_cfg(cfg, args)
    dets = io.load_detections(args.detections, cfg.classes)
    out = {image_id: ood_recall_enhancement(items, fcfg) for image_id, items in dets.items()}
    io.write_detections(args.out, out)
    kept = sum(len(v) for v in out.values())
    logger.info("kept %d of %d detections", kept, sum(len(v) for v in dets.values()))
    return EXIT_OK


def cmd_dfr(args) -> int:
    cfg = _base_config(args)
    dcfg = _dfr_cfg(cfg, args)
    pattern = args.depth or cfg.depth
    if not pattern:
        raise ConfigError("a depth path pattern is required (--depth or config 'depth')")
    scale = args.depth_scale if args.depth_scale is not None else cfg.depth_scale
    dets = io.load_detections(args.detections, cfg.classes)
    out: dict[str, list[Detection]] = {}
    skipped = 0
    for image_id, items in dets.items():
        try:
            depth = io.load_depth(cfg.resolve(pattern, image_id), scale)
            out[image_id] = dfr_filter(items, depth, dcfg)
        except (OSError, ValueError) as err:
            logger.error("image %s skipped: %s", image_id, err)
            skipped += 1
    io.write_detections(args.out, out)
    return EXIT_SKIPPED if skipped else EXIT_OK


def cmd_mask2box(args) -> int:
    cfg = _base_config(args)
    scores = io.load_score_map(args.scores, args.scale)
    if args.thresholds:
        thresholds = args.thresholds
    elif cfg.thresholds:
        thresholds = list(cfg.thresholds)
    else:
        thresholds = default_thresholds(scores, args.grid_size or cfg.grid_size)
    dets = multi_threshold_boxes(scores, thresholds)
    image_id = args.image_id or Path(args.scores).stem
    io.write_detections(args.out, {image_id: dets})
    logger.info("%d boxes from %d thresholds", len(dets), len(thresholds))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _base_config(args)
    cfg = cfg.with_overrides(
        detections=Path(args.detections) if args.detections else None,
        ground_truth=Path(args.ground_truth) if args.ground_truth else None,
        depth=args.depth,
        roi=args.roi,
        workers=args.workers,
    )
    if args.mu is not None:
        cfg = replace(cfg, dfr=replace(cfg.dfr, mu=args.mu))
    report = run_pipeline(cfg, dfr_enabled=args.dfr)
    text = io.dumps_report(report.to_dict())
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.table:
        Path(args.table).write_text(report.table(), encoding="utf-8")
    sys.stderr.write(report.table())
    return EXIT_SKIPPED if report.skipped else EXIT_OK


def _labeled(path: str, anns) -> LabeledImage:
    stem = Path(path).stem
    return LabeledImage(
        io.load_rgb(path),
        [Annotation(b, lab) for b, lab in anns.get(stem, [])],
        source=stem,
    )


def cmd_augment(args) -> int:
    cfg = _base_config(args)
    anns = io.load_annotations_raw(args.annotations) if args.annotations else {}
    label_map = LabelSpaceMap(cfg.classes)
    ad = [remap_labels(_labeled(p, anns), label_map) for p in args.ad]
    ood = [remap_labels(_labeled(p, anns), label_map) for p in args.ood]
    out = mosaic_plus(ad, ood, args.canvas, args.seed)
    if args.mixup:
        lam = args.lam if args.lam is not None else sample_mixup_lambda(np.random.default_rng(args.seed))
        out = mixup_blend(out, remap_labels(_labeled(args.mixup, anns), label_map), lam)
    io.save_rgb(args.out_image, out.pixels)
    image_id = Path(args.out_image).stem
    gts = {image_id: [GroundTruth(a.box, a.label, a.label >= 0) for a in out.annotations]}
    io.write_ground_truth(args.out_annotations, gts)
    return EXIT_OK


def cmd_synth(args) -> int:
    params = SceneParams(width=args.size[0], height=args.size[1])
    path = write_dataset(
        args.out_dir,
        args.n_images,
        seed=args.seed,
        params=params,
        depth_format=args.depth_format,
        ghost_copies=args.ghost_copies,
    )
    logger.info("wrote %s", path)
    print(path)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _base_config(args)
    w, h = args.size
    rng = np.random.default_rng(args.seed)
    depth = (rng.random((h, w)) * 255).astype(np.float32)
    boxes = random_boxes(args.boxes, w, h, args.seed)
    stages = {
        "dfr": dfr_stage(depth, boxes, cfg.dfr),
        "change_map": lambda: depth_change_map(depth, cfg.dfr),
        "filter": _filter_stage(args.boxes, w, h, cfg, args.seed),
    }
    names = list(stages) if args.stage == "all" else [args.stage]
    for name in names:
        print(bench_runtime(name, stages[name], args.repetitions))
    return EXIT_OK


def _filter_stage(n: int, w: int, h: int, cfg: PipelineConfig, seed: int):
    rng = np.random.default_rng(seed)
    dets = [
        Detection(b, sco=float(rng.random()), occ=float(rng.random()))
        for b in random_boxes(n, w, h, seed)
    ]
    return lambda: ood_recall_enhancement(dets, cfg.filter)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ooddet", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="YAML pipeline configuration")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="standard + occupancy recall filtering")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mu-sco", type=float)
    p.add_argument("--mu-occ", type=float)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("dfr", help="depth-based false-positive reduction")
    p.add_argument("--detections", required=True)
    p.add_argument("--depth", help="depth path pattern containing {image_id}")
    p.add_argument("--depth-scale", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--change-threshold", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dfr)

    p = sub.add_parser("mask2box", help="anomaly score map to scored OOD boxes")
    p.add_argument("--scores", required=True, help=".pfm, or 16-bit .png/.pgm with --scale")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--thresholds", type=float, nargs="+")
    p.add_argument("--grid-size", type=int)
    p.add_argument("--image-id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask2box)

    p = sub.add_parser("eval", help="run the full pipeline and report metrics")
    p.add_argument("--detections")
    p.add_argument("--ground-truth")
    p.add_argument("--depth")
    p.add_argument("--roi")
    p.add_argument("--mu", type=float)
    p.add_argument("--workers", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dfr", dest="dfr", action="store_true", default=None)
    g.add_argument("--no-dfr", dest="dfr", action="store_false")
    p.add_argument("--out", help="report JSON (default: stdout)")
    p.add_argument("--table", help="also write the human-readable table here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="Mosaic+ composition with optional mixup")
    p.add_argument("--ad", nargs=2, required=True, metavar="IMG")
    p.add_argument("--ood", nargs=2, required=True, metavar="IMG")
    p.add_argument("--mixup", metavar="IMG")
    p.add_argument("--lam", type=float)
    p.add_argument("--annotations", help="ground-truth JSONL keyed by image file stem")
    p.add_argument("--canvas", type=_size, default=(640, 640))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-annotations", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("synth", help="write a synthetic dataset with a runnable config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-images", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_size, default=(384, 192))
    p.add_argument("--ghost-copies", type=int, default=1)
    p.add_argument("--depth-format", choices=("png", "pgm"), default="png")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="stage latency over repeated runs")
    p.add_argument("--stage", choices=("dfr", "change_map", "filter", "all"), default="dfr")
    p.add_argument("--size", type=_size, default=(2048, 1024))
    p.add_argument("--boxes", type=int, default=100)
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, io.FormatError, FileNotFoundError, ValueError) as err:
        logger.error("%s", err)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
