import json
import logging
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ooddet import io
from ooddet.augment import AD_CLASSES
from ooddet.detection import OOD_LABEL, RECALL_ENHANCED, Detection
from ooddet.geometry import BoundingBox
from ooddet.metrics import GroundTruth
from strategies import boxes

HEADER = '{"format": "ooddet-detections", "version": 1}\n'
GT_HEADER = '{"format": "ooddet-groundtruth", "version": 1}\n'
tmp_ok = settings(suppress_health_check=[HealthCheck.function_scoped_fixture])


@st.composite
def detections(draw):
    unit = st.floats(0, 1)
    label = draw(st.integers(-1, 7))
    prov = RECALL_ENHANCED if label == OOD_LABEL and draw(st.booleans()) else "standard"
    scores = tuple(draw(st.lists(unit, max_size=9)))
    return Detection(draw(boxes()), sco=draw(unit), occ=draw(unit), label=label, class_scores=scores, provenance=prov)


class TestDetections:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text("")
        assert io.load_detections(p) == {}
        p.write_text(HEADER)
        assert io.load_detections(p) == {}

    def test_sco_out_of_range_reports_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(
            HEADER
            + '{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "sco": 0.5, "occ": 0}\n'
            + "\n"
            + '{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "sco": 1.5, "occ": 0}\n'
        )
        with pytest.raises(io.FormatError) as err:
            io.load_detections(p)
        assert err.value.line == 4
        assert ":4:" in str(err.value)

    def test_missing_occ_defaults_with_warning(self, tmp_path, caplog):
        p = tmp_path / "d.jsonl"
        p.write_text(HEADER + '{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "sco": 0.5, "label": "car"}\n')
        with caplog.at_level(logging.WARNING):
            dets = io.load_detections(p, AD_CLASSES)
        assert dets["a"][0].occ == 0.0
        assert dets["a"][0].label == AD_CLASSES.index("car")
        assert "occ" in caplog.text

    @pytest.mark.parametrize(
        "line, msg",
        [
            ('{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "sco": 0.5}', "y2"),
            ('{"x1": 0, "y1": 0, "x2": 1, "y2": 1, "sco": 0.5}', "image_id"),
            ('{"image_id": "a", "x1": 2, "y1": 0, "x2": 1, "y2": 1, "sco": 0.5}', "out of order"),
            ('{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "sco": 0.5, "label": "giraffe"}', "giraffe"),
            ('{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "sco": 0.5, "label": 8}', "label space"),
            ('{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1}', "sco"),
            ("[1, 2]", "object"),
            ("{not json", "invalid JSON"),
        ],
    )
    def test_malformed(self, tmp_path, line, msg):
        p = tmp_path / "d.jsonl"
        p.write_text(HEADER + line + "\n")
        with pytest.raises(io.FormatError, match=msg):
            io.load_detections(p, AD_CLASSES)

    def test_header_checks(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "sco": 0.5}\n')
        with pytest.raises(io.FormatError, match="header"):
            io.load_detections(p)
        p.write_text(GT_HEADER)
        with pytest.raises(io.FormatError, match="format"):
            io.load_detections(p)
        p.write_text('{"format": "ooddet-detections", "version": 9}\n')
        with pytest.raises(io.FormatError, match="version"):
            io.load_detections(p)

    @tmp_ok
    @given(st.dictionaries(st.text("abc0123", min_size=1, max_size=4), st.lists(detections(), max_size=5), max_size=4))
    def test_round_trip(self, tmp_path, data):
        p = tmp_path / "rt.jsonl"
        io.write_detections(p, data)
        back = io.load_detections(p)
        assert {k: v for k, v in data.items() if v} == dict(back)


class TestGroundTruth:
    def test_round_trip_with_empty_image(self, tmp_path):
        gts = {
            "a": [GroundTruth(BoundingBox(0, 0, 5, 5), 2), GroundTruth(BoundingBox(1.5, 2, 3, 4), OOD_LABEL, False)],
            "b": [],
        }
        p = tmp_path / "g.jsonl"
        io.write_ground_truth(p, gts)
        assert io.load_ground_truth(p) == gts

    def test_class_names(self, tmp_path):
        p = tmp_path / "g.jsonl"
        p.write_text(GT_HEADER + '{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "label": "bus"}\n')
        assert io.load_ground_truth(p, AD_CLASSES)["a"][0].label == AD_CLASSES.index("bus")

    def test_known_ood_rejected(self, tmp_path):
        p = tmp_path / "g.jsonl"
        p.write_text(GT_HEADER + '{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "label": "ood"}\n')
        with pytest.raises(io.FormatError, match="OOD"):
            io.load_ground_truth(p)

    def test_raw_annotations_keep_source_names(self, tmp_path):
        p = tmp_path / "g.jsonl"
        p.write_text(GT_HEADER + '{"image_id": "a", "x1": 0, "y1": 0, "x2": 1, "y2": 1, "label": "giraffe", "known": false}\n')
        assert io.load_annotations_raw(p)["a"][0][1] == "giraffe"


class TestRasters:
    @pytest.mark.parametrize("suffix", [".png", ".pgm"])
    def test_depth_round_trip(self, tmp_path, suffix):
        d = (np.arange(48, dtype=np.float32).reshape(6, 8) * 0.25) + 3
        p = tmp_path / f"d{suffix}"
        io.save_depth(p, d, scale=1 / 64)
        np.testing.assert_array_equal(io.load_depth(p, 1 / 64), d)

    def test_depth_range_check(self, tmp_path):
        with pytest.raises(ValueError):
            io.save_depth(tmp_path / "d.png", np.full((2, 2), 70000.0))

    @given(arrays(np.uint16, st.tuples(st.integers(1, 9), st.integers(1, 9))))
    def test_pgm_binary_16bit(self, arr):
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "x.pgm"
            io.write_pgm(p, arr)
            data = p.read_bytes()
            assert data.startswith(b"P5")
            np.testing.assert_array_equal(io.read_pgm(p), arr)

    def test_pgm_ascii_with_comment(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P2\n# a comment\n3 2\n255\n0 1 2\n3 4 255\n")
        np.testing.assert_array_equal(io.read_pgm(p), [[0, 1, 2], [3, 4, 255]])

    def test_pgm_bad_magic(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P7\n1 1\n255\n\x00")
        with pytest.raises(io.FormatError):
            io.read_pgm(p)

    def test_mask_round_trip(self, tmp_path):
        m = np.eye(5, dtype=bool)
        for name in ("m.png", "m.pgm"):
            io.save_mask(tmp_path / name, m)
            np.testing.assert_array_equal(io.load_mask(tmp_path / name), m)

    def test_pfm_round_trip_and_layout(self, tmp_path):
        a = np.arange(6, dtype=np.float32).reshape(2, 3) / 7
        p = tmp_path / "s.pfm"
        io.write_pfm(p, a)
        raw = p.read_bytes()
        assert raw.startswith(b"Pf\n3 2\n-1.0\n")
        # bottom row stored first
        assert np.frombuffer(raw[len(b"Pf\n3 2\n-1.0\n"):][:12], "<f4").tolist() == a[1].tolist()
        np.testing.assert_array_equal(io.load_score_map(p), a)

    def test_pfm_truncated(self, tmp_path):
        p = tmp_path / "s.pfm"
        p.write_bytes(b"Pf\n3 2\n-1.0\n\x00\x00")
        with pytest.raises(io.FormatError, match="truncated"):
            io.read_pfm(p)

    def test_unsupported_raster(self, tmp_path):
        p = tmp_path / "d.tif"
        p.write_bytes(b"")
        with pytest.raises(io.FormatError):
            io.load_depth(p)


def test_report_is_canonical():
    text = io.dumps_report({"b": 1.0, "a": [1, {"z": None, "c": 2}]})
    assert text == json.dumps({"a": [1, {"c": 2, "z": None}], "b": 1.0}, indent=2) + "\n"
    with pytest.raises(ValueError):
        io.dumps_report({"x": float("nan")})
