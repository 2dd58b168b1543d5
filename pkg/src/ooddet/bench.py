"""Wall-clock latency measurement of pipeline stages."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .depth import DfrConfig, FlatnessIndex, depth_change_map
from .geometry import BoundingBox

WARMUP_RUNS = 3


@dataclass(frozen=True)
class BenchResult:
    stage: str
    repetitions: int
    mean_ms: float
    std_ms: float
    min_ms: float
    max_ms: float

    def __str__(self) -> str:
        return (
            f"{self.stage}: {self.mean_ms:.3f} +/- {self.std_ms:.3f} ms "
            f"(min {self.min_ms:.3f}, max {self.max_ms:.3f}, n={self.repetitions})"
        )


def bench_runtime(stage: str, fn: Callable[[], object], repetitions: int = 100) -> BenchResult:
    """Time ``fn`` after a few warm-up calls; population standard deviation."""
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    for _ in range(WARMUP_RUNS):
        fn()
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1000.0)
    return BenchResult(
        stage=stage,
        repetitions=repetitions,
        mean_ms=statistics.fmean(samples),
        std_ms=statistics.pstdev(samples),
        min_ms=min(samples),
        max_ms=max(samples),
    )


def random_boxes(n: int, width: int, height: int, seed: int = 0) -> list[BoundingBox]:
    rng = np.random.default_rng(seed)
    boxes = []
    for _ in range(n):
        bw = rng.uniform(8, width / 8)
        bh = rng.uniform(8, height / 8)
        x1 = rng.uniform(0, width - bw)
        y1 = rng.uniform(0, height - bh)
        boxes.append(BoundingBox(x1, y1, x1 + bw, y1 + bh))
    return boxes


def dfr_stage(depth: np.ndarray, boxes: list[BoundingBox], cfg: DfrConfig = DfrConfig()) -> Callable[[], list[float]]:
    """Closure computing the change map and one flatness value per box."""

    def run() -> list[float]:
        index = FlatnessIndex(depth_change_map(depth, cfg), cfg)
        return [index.proportion(b) for b in boxes]

    return run
