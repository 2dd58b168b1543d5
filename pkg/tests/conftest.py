import itertools

import numpy as np
import pytest
from hypothesis import settings

from ooddet.geometry import BoundingBox

settings.register_profile("ci", max_examples=150, deadline=None)
settings.load_profile("ci")


def raster_union(boxes, size=64):
    """Pixel count of a union of integer boxes on a size x size grid."""
    grid = np.zeros((size, size), dtype=bool)
    for b in boxes:
        grid[int(b.y1) : int(b.y2), int(b.x1) : int(b.x2)] = True
    return int(grid.sum())


def inclusion_exclusion(boxes):
    """Union area by alternating sums over all intersections of subsets."""
    total = 0.0
    for r in range(1, len(boxes) + 1):
        for subset in itertools.combinations(boxes, r):
            x1 = max(b.x1 for b in subset)
            y1 = max(b.y1 for b in subset)
            x2 = min(b.x2 for b in subset)
            y2 = min(b.y2 for b in subset)
            area = max(0.0, x2 - x1) * max(0.0, y2 - y1)
            total += (-1) ** (r + 1) * area
    return total


def random_box(rng, extent=100.0, min_side=0.0):
    x = np.sort(rng.uniform(0, extent, 2))
    y = np.sort(rng.uniform(0, extent, 2))
    return BoundingBox(x[0], y[0], max(x[1], x[0] + min_side), max(y[1], y[0] + min_side))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        request.config.stash.setdefault(_ACCEPTANCE, []).append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
