import shutil
from dataclasses import replace

import numpy as np
import pytest

from ooddet import io
from ooddet.config import ConfigError, PipelineConfig, load_config
from ooddet.depth import DfrConfig, dfr_filter
from ooddet.detection import Detection
from ooddet.geometry import BoundingBox
from ooddet.metrics import GroundTruth
from ooddet.pipeline import ImageInput, evaluate, run_pipeline
from ooddet.synth import SceneParams, generate_scene, plant_detections, render_depth, write_dataset

N_IMAGES = 6


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    return write_dataset(tmp_path_factory.mktemp("synth"), N_IMAGES, seed=100)


def expected_counts(seed=100, n=N_IMAGES):
    """Oracle from the scene definitions alone."""
    n_unknown = n_ghosts = 0
    for i in range(n):
        s = generate_scene(SceneParams(), seed + i)
        n_unknown += sum(not o.known for o in s.objects)
        n_ghosts += len(s.ghosts)
    return n_unknown, n_ghosts


def test_end_to_end_matches_oracle(dataset):
    n_unknown, n_ghosts = expected_counts()
    assert n_unknown > 0 and n_ghosts > 0
    cfg = load_config(dataset)
    on = run_pipeline(cfg)
    assert on.recall_at_k == 100.0
    assert on.fpr_at_k == 0.0
    assert on.map_known == 100.0 and on.ap50_known == 100.0
    assert on.counts["unknown_gt"] == n_unknown
    assert on.counts["dfr_rejected"] == n_ghosts
    off = run_pipeline(cfg, dfr_enabled=False)
    assert off.recall_at_k == 100.0
    # every ghost is on the road, away from all objects
    assert off.fpr_at_k == pytest.approx(1000.0 * n_ghosts / (N_IMAGES * 100), rel=1e-15)
    assert on.fpr_at_k < off.fpr_at_k
    assert not on.skipped and not on.diagnostics


def test_report_byte_identical_and_worker_independent(dataset):
    cfg = load_config(dataset)
    a = io.dumps_report(run_pipeline(cfg).to_dict())
    b = io.dumps_report(run_pipeline(cfg).to_dict())
    c = io.dumps_report(run_pipeline(cfg.with_overrides(workers=3)).to_dict())
    assert a == b == c


def test_undefined_recall():
    item = ImageInput("x", [Detection(BoundingBox(0, 0, 4, 4), sco=0.5)], [GroundTruth(BoundingBox(0, 0, 4, 4), 0)])
    report = evaluate([item], PipelineConfig(), dfr_enabled=False)
    assert report.recall_at_k is None
    assert report.fpr_at_k is None
    assert any("recall is undefined" in m for m in report.diagnostics)
    assert "undefined" in report.table()


def test_missing_depth_skips_image(dataset, tmp_path):
    root = tmp_path / "copy"
    shutil.copytree(dataset.parent, root)
    (root / "depth" / "00002.png").unlink()
    report = run_pipeline(load_config(root / "config.yaml"))
    assert [s["image_id"] for s in report.skipped] == ["00002"]
    assert report.n_images == N_IMAGES - 1


def test_dfr_without_depth_is_fatal(dataset):
    cfg = load_config(dataset)
    with pytest.raises(ConfigError):
        run_pipeline(replace(cfg, depth=None))


def test_mu_zero_superset():
    for seed in range(10):
        s = generate_scene(seed=seed)
        dets = plant_detections(s, ghost_copies=2)
        depth = render_depth(s)
        base = dfr_filter(dets, depth, DfrConfig(mu=0.0))
        assert base == dets
        for mu in (0.1, 0.3, 0.6, 1.0):
            kept = dfr_filter(dets, depth, DfrConfig(mu=mu))
            assert all(k in base for k in kept)


def test_in_memory_inputs_match_files(dataset):
    cfg = load_config(dataset)
    dets = io.load_detections(cfg.resolve(cfg.detections))
    gts = io.load_ground_truth(cfg.resolve(cfg.ground_truth))
    items = [
        ImageInput(i, dets[i], gts[i], io.load_depth(cfg.resolve(cfg.depth, i), cfg.depth_scale), io.load_mask(cfg.resolve(cfg.roi, i)))
        for i in gts
    ]
    assert evaluate(items, cfg).to_dict() == run_pipeline(cfg).to_dict()


def test_depth_quantization_is_lossless(dataset):
    cfg = load_config(dataset)
    s = generate_scene(SceneParams(), 100)
    np.testing.assert_array_equal(io.load_depth(cfg.resolve(cfg.depth, "00000"), cfg.depth_scale), render_depth(s))
