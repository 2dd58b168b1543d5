"""Pipeline configuration loaded from YAML."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .augment import AD_CLASSES
from .depth import DfrConfig
from .mask2box import DEFAULT_GRID_SIZE
from .scoring import FilterConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MetricConfig:
    k: int = 100
    iou_thr: float = 0.5
    roi_min_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.iou_thr <= 1.0:
            raise ValueError(f"iou_thr must be in (0, 1], got {self.iou_thr}")
        if not 0.0 <= self.roi_min_fraction <= 1.0:
            raise ValueError(f"roi_min_fraction must be in [0, 1], got {self.roi_min_fraction}")


@dataclass(frozen=True)
class PipelineConfig:
    detections: Path | None = None
    ground_truth: Path | None = None
    depth: str | None = None  # path pattern with {image_id}
    roi: str | None = None  # path pattern with {image_id}
    depth_scale: float = 1.0
    dfr_enabled: bool = True
    filter: FilterConfig = FilterConfig()
    dfr: DfrConfig = DfrConfig()
    metrics: MetricConfig = MetricConfig()
    classes: tuple[str, ...] = AD_CLASSES
    thresholds: tuple[float, ...] | None = None
    grid_size: int = DEFAULT_GRID_SIZE
    workers: int = 1
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, pattern: str | Path, image_id: str | None = None) -> Path:
        text = str(pattern)
        if image_id is not None:
            text = text.format(image_id=image_id)
        p = Path(text)
        return p if p.is_absolute() else self.base_dir / p

    def with_overrides(self, **changes: Any) -> PipelineConfig:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _section(cls, raw: Any, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed - {"enabled"}
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        return cls(**{k: v for k, v in raw.items() if k in allowed})
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid {name!r} section: {err}") from None


_TOP_KEYS = {
    "detections", "ground_truth", "depth", "roi", "depth_scale", "filter", "dfr",
    "metrics", "classes", "mask2box", "workers",
}


def parse_config(raw: Any, base_dir: str | Path = ".") -> PipelineConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")

    dfr_raw = raw.get("dfr") or {}
    m2b = raw.get("mask2box") or {}
    if not isinstance(m2b, dict):
        raise ConfigError("section 'mask2box' must be a mapping")
    thresholds = m2b.get("thresholds")
    try:
        cfg = PipelineConfig(
            detections=Path(raw["detections"]) if raw.get("detections") else None,
            ground_truth=Path(raw["ground_truth"]) if raw.get("ground_truth") else None,
            depth=raw.get("depth"),
            roi=raw.get("roi"),
            depth_scale=float(raw.get("depth_scale", 1.0)),
            dfr_enabled=bool(dfr_raw.get("enabled", True)) if isinstance(dfr_raw, dict) else True,
            filter=_section(FilterConfig, raw.get("filter"), "filter"),
            dfr=_section(DfrConfig, dfr_raw, "dfr"),
            metrics=_section(MetricConfig, raw.get("metrics"), "metrics"),
            classes=tuple(raw.get("classes", AD_CLASSES)),
            thresholds=tuple(float(t) for t in thresholds) if thresholds else None,
            grid_size=int(m2b.get("grid_size", DEFAULT_GRID_SIZE)),
            workers=int(raw.get("workers", 1)),
            base_dir=Path(base_dir),
        )
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from None
    if cfg.depth_scale <= 0:
        raise ConfigError("depth_scale must be positive")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from None
    return parse_config(raw, base_dir=path.parent)


def dump_config(cfg: PipelineConfig) -> str:
    """YAML text that :func:`parse_config` reads back to an equal config."""
    raw: dict[str, Any] = {
        "detections": str(cfg.detections) if cfg.detections else None,
        "ground_truth": str(cfg.ground_truth) if cfg.ground_truth else None,
        "depth": cfg.depth,
        "roi": cfg.roi,
        "depth_scale": cfg.depth_scale,
        "filter": {f.name: getattr(cfg.filter, f.name) for f in fields(cfg.filter)},
        "dfr": {"enabled": cfg.dfr_enabled, **{f.name: getattr(cfg.dfr, f.name) for f in fields(cfg.dfr)}},
        "metrics": {f.name: getattr(cfg.metrics, f.name) for f in fields(cfg.metrics)},
        "classes": list(cfg.classes),
        "mask2box": {"thresholds": list(cfg.thresholds) if cfg.thresholds else None, "grid_size": cfg.grid_size},
        "workers": cfg.workers,
    }
    raw = {k: v for k, v in raw.items() if v is not None}
    return yaml.safe_dump(raw, sort_keys=False)
