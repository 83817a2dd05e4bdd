"""Pipeline configuration: one place for every constant the stages consume."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .sandbox import ResourceLimits


class ConfigError(Exception):
    pass


@dataclass
class BackendSpec:
    type: str = "replay"  # "replay" | "live"
    endpoint_url: str = ""  # falls back to $CODEMILL_ENDPOINT when empty
    model: str = ""
    api_key_env: str = "CODEMILL_API_KEY"


@dataclass
class PipelineConfig:
    workers: int = 4
    limits: ResourceLimits = field(default_factory=ResourceLimits)
    e_default: int = 5
    grid_cap: int = 200
    min_inputs: int = 50
    n_candidates: int = 16
    threshold_default: float = 0.60
    threshold_hard: float = 0.40
    hard_rating_cutoff: int = 1600
    ngram_n: int = 16
    rng_seed: int = 0
    temperature: float = 0.6
    max_tokens: int = 8192
    synth_samples_per_seed: int = 1
    inputs_per_point: int = 1
    solution_runtime_tag: str = "python"
    oracle_runtime_tag: str = "python"
    backend: BackendSpec = field(default_factory=BackendSpec)
    benchmarks_path: str = ""
    # extra runner recipes: tag -> {"argv": [...], "extension": ".py"};
    # merged over the built-in python recipes
    recipes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.threshold_default <= 1.0:
            raise ConfigError("threshold_default must be in (0, 1]")
        if not 0.0 < self.threshold_hard <= 1.0:
            raise ConfigError("threshold_hard must be in (0, 1]")
        if self.min_inputs < 1:
            raise ConfigError("min_inputs must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)


def _limits_from_mapping(data: dict) -> ResourceLimits:
    return ResourceLimits(
        wall_timeout_seconds=float(data.get("wall_timeout_seconds", 10.0)),
        address_space_bytes=int(float(data.get("address_space_gib", 4)) * (1 << 30)),
        max_output_bytes=int(float(data.get("max_output_mib", 16)) * (1 << 20)),
    )


def config_from_mapping(data: dict) -> PipelineConfig:
    data = dict(data or {})
    limits = _limits_from_mapping(data.pop("limits", {}) or {})
    backend = BackendSpec(**(data.pop("backend", {}) or {}))
    known = {f for f in PipelineConfig.__dataclass_fields__ if f not in {"limits", "backend"}}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(limits=limits, backend=backend, **data)


def load_config(path: Optional[str | Path] = None) -> PipelineConfig:
    """Load YAML config; with no path, the shipped defaults apply."""
    if path is None:
        text = (resources.files("codemill") / "data" / "default_config.yaml").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_mapping(data)
