import numpy as np
import pytest

from ooddet.bench import BenchResult, bench_runtime, dfr_stage, random_boxes
from ooddet.depth import FlatnessIndex, depth_change_map, flatness_proportion


def test_single_repetition_has_zero_std():
    r = bench_runtime("noop", lambda: None, repetitions=1)
    assert r.std_ms == 0.0 and r.repetitions == 1


def test_mean_within_range():
    r = bench_runtime("sum", lambda: sum(range(1000)), repetitions=20)
    assert r.min_ms <= r.mean_ms <= r.max_ms
    assert "sum:" in str(r)


def test_warmup_runs_not_counted():
    calls = []
    bench_runtime("count", lambda: calls.append(1), repetitions=5)
    assert len(calls) == 5 + 3


def test_rejects_zero_repetitions():
    with pytest.raises(ValueError):
        bench_runtime("x", lambda: None, repetitions=0)


def test_dfr_stage_matches_direct_evaluation():
    rng = np.random.default_rng(0)
    depth = (rng.random((64, 128)) * 255).astype(np.float32)
    boxes = random_boxes(15, 128, 64, seed=1)
    c = depth_change_map(depth)
    assert dfr_stage(depth, boxes)() == [flatness_proportion(c, b) for b in boxes]
    assert all(0 <= b.x1 < b.x2 <= 128 and 0 <= b.y1 < b.y2 <= 64 for b in boxes)
    assert isinstance(FlatnessIndex(c).proportion(boxes[0]), float)


def test_result_is_frozen():
    r = BenchResult("s", 1, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(AttributeError):
        r.mean_ms = 2.0
