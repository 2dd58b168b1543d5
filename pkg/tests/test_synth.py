import numpy as np
import pytest

from conftest import random_box
from ooddet.depth import DfrConfig, depth_change_map, flatness_proportion
from ooddet.detection import OOD_LABEL
from ooddet.geometry import BoundingBox, occupancy_target_exact
from ooddet.synth import (
    SceneObject,
    SceneParams,
    generate_scene,
    ground_depth,
    plant_detections,
    raster_occupancy_oracle,
    render_depth,
    render_rgb,
    road_mask,
)


class TestScene:
    def test_zero_objects_is_pure_ramp(self):
        p = SceneParams(n_objects=(0, 0))
        s = generate_scene(p, 3)
        assert s.objects == [] and s.ground_truth().objects == []
        np.testing.assert_array_equal(render_depth(s), ground_depth(p).astype(np.float32))

    def test_object_depth_constant_inside_box(self):
        p = SceneParams(n_objects=(1, 1), n_ghosts=(0, 0))
        s = generate_scene(p, 5)
        (o,) = s.objects
        b = o.box
        patch = render_depth(s)[int(b.y1) : int(b.y2), int(b.x1) : int(b.x2)]
        assert (patch == np.float32(o.depth)).all()

    def test_deterministic(self):
        a, b = generate_scene(seed=11), generate_scene(seed=11)
        assert a.objects == b.objects and a.ghosts == b.ghosts
        assert render_rgb(a).tobytes() == render_rgb(b).tobytes()

    def test_ghosts_leave_depth_alone_and_are_unannotated(self):
        s = generate_scene(seed=2)
        gt_boxes = {g.box for g in s.ground_truth().objects}
        assert not gt_boxes & set(s.ghosts)
        d = render_depth(s)
        ramp = ground_depth(s.params)
        for g in s.ghosts:
            sl = np.s_[int(g.y1) : int(g.y2), int(g.x1) : int(g.x2)]
            np.testing.assert_array_equal(d[sl], ramp[sl].astype(np.float32))

    def test_nearest_object_wins(self):
        s = generate_scene(SceneParams(n_objects=(0, 0)), 0)
        s.objects = [
            SceneObject(BoundingBox(10, 100, 50, 140), 0, 40.0),
            SceneObject(BoundingBox(30, 110, 70, 150), 1, 30.0),
        ]
        assert render_depth(s)[120, 40] == 30.0

    def test_roi_covers_ramp(self):
        p = SceneParams()
        roi = road_mask(p)
        assert roi[p.horizon_row :].all() and not roi[: p.horizon_row].any()

    @pytest.mark.parametrize("seed", range(30))
    def test_fixture_contract(self, seed):
        s = generate_scene(seed=seed)
        c = depth_change_map(render_depth(s))
        for o in s.objects:
            assert flatness_proportion(c, o.box) >= 0.3
        for g in s.ghosts:
            assert flatness_proportion(c, g) < 0.3

    def test_ramp_clears_threshold(self):
        p = SceneParams()
        c = depth_change_map(ground_depth(p))
        road = c[p.horizon_row + 3 : p.height - p.bottom_margin]
        assert (np.abs(road) >= DfrConfig().change_threshold).all()


class TestPlanted:
    def test_composition(self):
        s = generate_scene(seed=4)
        dets = plant_detections(s, ghost_copies=3, noise=5)
        assert len(dets) == len(s.objects) + 3 * len(s.ghosts) + 5
        for o, d in zip(s.objects, dets):
            assert d.box == o.box
            if o.known:
                assert d.argmax_label() == o.label
            else:
                assert d.label == OOD_LABEL

    def test_deterministic(self):
        s = generate_scene(seed=4)
        assert plant_detections(s) == plant_detections(s)


class TestRasterOracle:
    def test_examples(self):
        p = BoundingBox(0, 0, 10, 10)
        assert raster_occupancy_oracle(p, [BoundingBox(20, 20, 30, 30)]) == 0.0
        assert raster_occupancy_oracle(p, [BoundingBox(-1, -1, 11, 11)]) == 1.0
        assert raster_occupancy_oracle(p, [BoundingBox(0, 0, 5, 10), BoundingBox(5, 0, 10, 5)]) == 0.75

    def test_converges(self, rng):
        for _ in range(100):
            pred = random_box(rng, min_side=1.0)
            gts = [random_box(rng) for _ in range(3)]
            exact = occupancy_target_exact(pred, gts)
            for res in (64, 256):
                assert abs(raster_occupancy_oracle(pred, gts, res) - exact) <= 2 / res

    def test_validation(self):
        with pytest.raises(ValueError):
            raster_occupancy_oracle(BoundingBox(0, 0, 1, 1), [], 0)
        with pytest.raises(ValueError):
            raster_occupancy_oracle(BoundingBox(0, 0, 0, 1), [])
