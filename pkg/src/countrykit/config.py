"""Pipeline configuration: one YAML file drives every stage; flags override."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

# Paths a config may reference; each must exist at load time when set.
_PATH_KEYS = (
    "city_table",
    "keywords",
    "boundaries",
    "taxonomy",
    "blacklist",
    "grouping",
    "image_dir",
    "scene_evidence",
    "face_evidence",
    "grey_evidence",
)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # input paths
    city_table: Optional[Path] = None
    keywords: Optional[Path] = None
    boundaries: Optional[Path] = None
    taxonomy: Optional[Path] = None
    blacklist: Optional[Path] = None
    grouping: Optional[Path] = None
    image_dir: Optional[Path] = None
    scene_evidence: Optional[Path] = None
    face_evidence: Optional[Path] = None
    grey_evidence: Optional[Path] = None

    # thresholds
    min_population: int = 1000
    bbox_half_width_km: float = 10.0
    fallback_km: float = 25.0
    cutoff_year: int = 2012
    urban_threshold: float = 0.5
    blacklist_threshold: float = 0.5
    face_area_threshold: float = 0.10
    grey_max_channel_diff: int = 8
    grey_min_fraction: float = 0.995

    # normalization
    jpeg_quality: int = 75
    min_dim_limit: int = 640

    # splitting
    train_ratio: str = "0.96"
    val_ratio: str = "0.02"
    test_ratio: str = "0.02"
    seed: int = 0

    # grouping / evaluation
    k: int = 61
    min_images: int = 0
    fusion_strategy: str = "average"
    topk: tuple[int, ...] = (1, 3, 5, 10)

    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        for key in _PATH_KEYS:
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{key}: path does not exist: {value}")
        for key in ("urban_threshold", "blacklist_threshold", "face_area_threshold", "grey_min_fraction"):
            value = getattr(self, key)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{key}: {value} outside [0, 1]")
        if self.k < 1:
            raise ConfigError(f"k: must be >= 1, got {self.k}")
        if self.jpeg_quality < 1 or self.jpeg_quality > 100:
            raise ConfigError(f"jpeg_quality: {self.jpeg_quality} outside [1, 100]")
        if self.min_dim_limit < 1:
            raise ConfigError(f"min_dim_limit: must be >= 1, got {self.min_dim_limit}")
        if self.bbox_half_width_km <= 0:
            raise ConfigError("bbox_half_width_km: must be positive")
        if self.fallback_km < 0:
            raise ConfigError("fallback_km: must be >= 0")
        if self.min_population < 0:
            raise ConfigError("min_population: must be >= 0")


def load_config(path: Path | str) -> PipelineConfig:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            doc = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")

    known = {f.name for f in fields(PipelineConfig)} - {"extra"}
    kwargs: dict = {}
    extra: dict = {}
    for key, value in doc.items():
        if key in known:
            if key in _PATH_KEYS and value is not None:
                value = (path.parent / value).resolve() if not Path(value).is_absolute() else Path(value)
            if key == "topk" and value is not None:
                value = tuple(int(v) for v in value)
            kwargs[key] = value
        else:
            extra[key] = value
    config = PipelineConfig(**kwargs, extra=extra)
    config.validate()
    return config
