"""Run configuration: defaults, a flat JSON file, then command-line overrides."""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from . import cir, market_data, stats
from . import segmentation as seg_mod
from .errors import ConfigError
from .pipeline import PipelineConfig

OUTPUT_DIR_ENV = "CIRSHARP_OUTPUT_DIR"
MODES = ("fixed", "anova_merged", "change_point")


@dataclass(frozen=True)
class RunConfig:
    input: Optional[str] = None
    maturity: str = ""  # comma-separated list for `compare`
    group_size: int = 8
    segmentation: str = "fixed"
    min_segment_len: int = seg_mod.DEFAULT_MIN_SEGMENT_LEN
    k_max: int = seg_mod.DEFAULT_K_MAX
    shift_threshold: float = market_data.DEFAULT_SHIFT_THRESHOLD
    alpha: float = stats.DEFAULT_ALPHA
    relax_pac: bool = False
    k_lower: float = cir.K_LOWER
    k_upper: float = cir.K_UPPER
    delta: float = market_data.DEFAULT_DELTA
    forecast_window: int = 8
    classic_window: int = 14
    output_dir: Optional[str] = None
    threads: int = 1

    @property
    def maturities(self) -> list[str]:
        return [m.strip() for m in self.maturity.split(",") if m.strip()]

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            group_size=self.group_size, delta=self.delta, alpha=self.alpha,
            relax_pac=self.relax_pac, k_bounds=(self.k_lower, self.k_upper),
            shift_threshold=self.shift_threshold, segmentation_mode=self.segmentation,
            min_segment_len=self.min_segment_len, k_max=self.k_max,
            threads=self.threads)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "cirsharp-out")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: Any):
    kind = _TYPES[key]
    if value is None:
        if "Optional" in kind:
            return None
        raise ConfigError(f"{key} may not be null")
    try:
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise ValueError
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for {key} (expected {kind})") from None


def validate(cfg: RunConfig) -> RunConfig:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.group_size >= 2, "group_size must be >= 2")
    need(cfg.segmentation in MODES, f"segmentation must be one of {', '.join(MODES)}")
    need(cfg.min_segment_len >= 2, "min_segment_len must be >= 2")
    need(cfg.k_max >= 1, "k_max must be >= 1")
    need(math.isfinite(cfg.shift_threshold) and cfg.shift_threshold > 0,
         "shift_threshold must be positive")
    need(0 < cfg.alpha < 1, "alpha must lie in (0, 1)")
    need(0 < cfg.k_lower < cfg.k_upper < math.inf, "need 0 < k_lower < k_upper")
    need(math.isfinite(cfg.delta) and cfg.delta > 0, "delta must be positive")
    need(cfg.forecast_window >= 8, "forecast_window must be >= 8")
    need(cfg.classic_window >= cir.MARTINGALE_MIN_WINDOW,
         f"classic_window must be >= {cir.MARTINGALE_MIN_WINDOW}")
    need(cfg.threads >= 1, "threads must be >= 1")
    return cfg


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a flat JSON object")
    for k, v in data.items():
        if isinstance(v, (dict, list)):
            raise ConfigError(f"config key {k!r} must be a scalar")
    return data


def build_config(file_values: Optional[Mapping] = None,
                 overrides: Optional[Mapping] = None) -> RunConfig:
    """Defaults, updated by file values, updated by non-None overrides."""
    merged = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in _TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            if source is overrides and value is None:
                continue
            merged[key] = _coerce(key, value)
    return validate(RunConfig(**merged))
