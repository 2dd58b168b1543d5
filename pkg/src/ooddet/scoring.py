"""Occupancy loss and the inference-time filtering cascade."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

from .detection import OOD_LABEL, RECALL_ENHANCED, STANDARD, Detection

EPS = 1e-7

Selector = Literal["known", "unknown", "all"]


@dataclass(frozen=True)
class FilterConfig:
    mu_sco: float = 0.01
    mu_occ: float = 0.01
    budget: int = 100
    w_o: float = 1.0  # occupancy loss weight; unused at inference

    def __post_init__(self) -> None:
        for name in ("mu_sco", "mu_occ"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is outside [0, 1]")
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")


def _clamp(b: float) -> float:
    return min(max(b, EPS), 1.0 - EPS)


def bce_occupancy_loss(b_occ: float, t_occ: float) -> float:
    """Binary cross entropy between predicted and target occupancy."""
    b = _clamp(b_occ)
    return -t_occ * math.log(b) - (1.0 - t_occ) * math.log1p(-b)


def bce_occupancy_grad(b_occ: float, t_occ: float) -> float:
    """Derivative of :func:`bce_occupancy_loss` with respect to ``b_occ``."""
    b = _clamp(b_occ)
    return (b - t_occ) / (b * (1.0 - b))


def standard_filter(dets: Sequence[Detection], cfg: FilterConfig) -> list[Detection]:
    """Keep detections with ``sco >= mu_sco``, labelled by their best class."""
    return [
        d.with_(label=d.argmax_label(), provenance=STANDARD)
        for d in dets
        if d.sco >= cfg.mu_sco
    ]


def ood_recall_enhancement(dets: Sequence[Detection], cfg: FilterConfig) -> list[Detection]:
    """Standard filter plus low-``sco``/high-``occ`` detections rescued as OOD.

    The two keep predicates are mutually exclusive, so every input appears at
    most once in the output. Input order is preserved.
    """
    out = []
    for d in dets:
        if d.sco >= cfg.mu_sco:
            out.append(d.with_(label=d.argmax_label(), provenance=STANDARD))
        elif d.occ >= cfg.mu_occ:
            out.append(d.with_(label=OOD_LABEL, provenance=RECALL_ENHANCED))
    return out


def _selected(d: Detection, selector: Selector) -> bool:
    if selector == "all":
        return True
    if selector == "unknown":
        return d.is_ood
    if selector == "known":
        return not d.is_ood
    raise ValueError(f"unknown selector {selector!r}")


def budget_top_k(dets: Sequence[Detection], k: int, selector: Selector = "all") -> list[Detection]:
    """Top ``k`` detections matching ``selector`` by ranking score (stable)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    chosen = [d for d in dets if _selected(d, selector)]
    # sorted() is stable, so ties keep input order
    return sorted(chosen, key=lambda d: -d.score)[:k]
