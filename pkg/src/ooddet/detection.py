"""Detection record shared by the filtering, depth and metric stages."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

from .geometry import BoundingBox

OOD_LABEL = -1
"""Label of the out-of-distribution class; known classes are ``0..K-1``."""

STANDARD = "standard"
RECALL_ENHANCED = "recall_enhanced"
Provenance = Literal["standard", "recall_enhanced"]


def _check_unit(name: str, value: float) -> None:
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ValueError(f"{name}={value!r} is outside [0, 1]")


@dataclass(frozen=True)
class Detection:
    """A scored box.

    ``class_scores`` has one entry per known class followed by one entry for
    the OOD class; it may be empty when a detection comes from a source that
    only reports a resolved label (files, mask conversion).
    """

    box: BoundingBox
    sco: float
    occ: float = 0.0
    label: int = OOD_LABEL
    class_scores: tuple[float, ...] = field(default=(), compare=True)
    provenance: Provenance = STANDARD

    def __post_init__(self) -> None:
        _check_unit("sco", self.sco)
        _check_unit("occ", self.occ)
        for s in self.class_scores:
            _check_unit("class score", s)
        if self.provenance not in (STANDARD, RECALL_ENHANCED):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.label < OOD_LABEL:
            raise ValueError(f"invalid label {self.label}")

    @property
    def is_ood(self) -> bool:
        return self.label == OOD_LABEL

    @property
    def score(self) -> float:
        """Ranking key: ``occ`` for recall-enhanced detections, ``sco`` otherwise."""
        return self.occ if self.provenance == RECALL_ENHANCED else self.sco

    def argmax_label(self) -> int:
        """Label implied by ``class_scores`` (last slot is OOD); falls back to ``label``."""
        if not self.class_scores:
            return self.label
        best = max(range(len(self.class_scores)), key=lambda i: (self.class_scores[i], -i))
        return OOD_LABEL if best == len(self.class_scores) - 1 else best

    def with_(self, **changes) -> Detection:
        return replace(self, **changes)
