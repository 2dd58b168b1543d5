from pathlib import Path

import pytest

from ooddet.config import ConfigError, MetricConfig, PipelineConfig, dump_config, load_config, parse_config


def test_defaults():
    cfg = parse_config({})
    assert cfg.filter.mu_sco == 0.01 and cfg.filter.mu_occ == 0.01
    assert cfg.dfr.mu == 0.3 and cfg.dfr.close_kernel == 10 and cfg.dfr.sobel_kernel == 5
    assert cfg.metrics == MetricConfig(k=100, iou_thr=0.5, roi_min_fraction=0.5)
    assert cfg.dfr_enabled


def test_full_document(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(
        "detections: d.jsonl\n"
        "ground_truth: g.jsonl\n"
        "depth: depth/{image_id}.png\n"
        "depth_scale: 0.5\n"
        "filter: {mu_sco: 0.05}\n"
        "dfr: {enabled: false, mu: 0.4}\n"
        "metrics: {k: 50}\n"
        "mask2box: {thresholds: [0.2, 0.6], grid_size: 8}\n"
        "workers: 2\n"
    )
    cfg = load_config(p)
    assert cfg.filter.mu_sco == 0.05 and cfg.dfr.mu == 0.4 and not cfg.dfr_enabled
    assert cfg.metrics.k == 50 and cfg.thresholds == (0.2, 0.6) and cfg.grid_size == 8
    assert cfg.resolve(cfg.depth, "007") == tmp_path / "depth/007.png"
    assert cfg.resolve("/abs/x.png") == Path("/abs/x.png")


def test_dump_round_trip(tmp_path):
    cfg = parse_config({"detections": "d.jsonl", "dfr": {"enabled": False, "mu": 0.2}, "mask2box": {"thresholds": [0.5]}})
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


@pytest.mark.parametrize(
    "raw",
    [
        {"bogus": 1},
        {"filter": {"mu_sco": 2.0}},
        {"filter": {"typo": 1}},
        {"filter": [1, 2]},
        {"dfr": {"sobel_kernel": 4}},
        {"metrics": {"k": 0}},
        {"depth_scale": -1},
        {"workers": 0},
        {"mask2box": 3},
        [1, 2],
    ],
)
def test_invalid(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.yaml")
    p = tmp_path / "bad.yaml"
    p.write_text("a: [1,\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_with_overrides_ignores_none():
    cfg = PipelineConfig(workers=2)
    assert cfg.with_overrides(workers=None, depth="x").workers == 2
    assert cfg.with_overrides(depth="x").depth == "x"
