"""Run configuration with layered sources.

Precedence, highest first: explicit overrides (CLI flags), ``CVAD_*``
environment variables, a YAML/JSON config file, built-in defaults. A dataset
profile fills in fusion weights and window scales unless those were set
explicitly in some layer.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .embedding import CLIP_DIM, DEFAULT_TEMPLATES
from .errors import ConfigError
from .keyframes import KeyFrameStrategy
from .position import DEFAULT_SCALES
from .scoring import DEFAULT_SIGMA, PROFILE_WEIGHTS, FusionWeights

ENV_PREFIX = "CVAD_"

PROFILES: dict[str, dict[str, Any]] = {
    "ave": {"weights": PROFILE_WEIGHTS["ave"], "scales": (48, 80, 240)},
    "sht": {"weights": PROFILE_WEIGHTS["sht"], "scales": DEFAULT_SCALES},
    "ub": {"weights": PROFILE_WEIGHTS["ub"], "scales": DEFAULT_SCALES},
    "ucf": {"weights": PROFILE_WEIGHTS["ucf"], "scales": DEFAULT_SCALES},
}


@dataclass
class RunConfig:
    segment_length: int = 24
    resolution: int = 240
    strategy: KeyFrameStrategy = KeyFrameStrategy.CLIP_THEN_GROUP
    scales: tuple[int, ...] = DEFAULT_SCALES
    weights: FusionWeights = field(default_factory=FusionWeights)
    profile: str | None = None
    sigma: float = DEFAULT_SIGMA
    use_position: bool = True
    use_temporal: bool = True
    reasoning: bool = True
    consideration: bool = True
    text_templates: tuple[str, ...] = DEFAULT_TEMPLATES
    prompt_dir: str | None = None
    mock: bool = False
    seed: int = 0
    embed_url: str | None = None
    embed_dim: int = CLIP_DIM
    lvlm_url: str | None = None
    lvlm_model: str = "default"
    api_key: str | None = None
    timeout: float = 120.0
    retries: int = 2
    max_in_flight: int = 3
    fallback_score: float = 0.0
    output_dir: str = "cvad_out"
    debug_dir: str | None = None

    def validate(self) -> "RunConfig":
        n = self.segment_length
        if n < 4 or n % 4:
            raise ConfigError(f"segment length must be a positive multiple of 4, got {n}")
        if not self.scales:
            raise ConfigError("at least one window scale is required")
        for s in self.scales:
            if s <= 0 or self.resolution % s:
                raise ConfigError(f"window scale {s} does not divide the working resolution {self.resolution}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be at least 1")
        if self.retries < 0:
            raise ConfigError("retries must be non-negative")
        if not 0.0 <= self.fallback_score <= 1.0:
            raise ConfigError("fallback score must lie in [0, 1]")
        if self.profile is not None and self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["strategy"] = self.strategy.value
        d["weights"] = list(self.weights.as_tuple())
        d["scales"] = list(self.scales)
        d["text_templates"] = list(self.text_templates)
        d.pop("api_key")
        return d


def _parse_bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _coerce(name: str, value: Any) -> Any:
    if value is None:
        return None
    try:
        if name == "weights":
            if isinstance(value, FusionWeights):
                return value
            if isinstance(value, str):
                return FusionWeights.parse(value)
            return FusionWeights(*map(float, value))
        if name == "scales":
            if isinstance(value, str):
                value = value.replace(",", " ").split()
            return tuple(int(v) for v in value)
        if name == "text_templates":
            return (value,) if isinstance(value, str) else tuple(value)
        if name == "strategy":
            return KeyFrameStrategy(value)
        ftype = {f.name: f.type for f in dataclasses.fields(RunConfig)}[name]
        if ftype == "bool":
            return _parse_bool(value)
        if ftype == "int":
            return int(value)
        if ftype == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {name}: {value!r} ({exc})") from exc


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(RunConfig))


def _layer(raw: Mapping[str, Any], origin: str) -> dict[str, Any]:
    out = {}
    for k, v in raw.items():
        key = k.replace("-", "_")
        if key not in FIELD_NAMES:
            raise ConfigError(f"unknown config key {k!r} in {origin}")
        out[key] = _coerce(key, v)
    return out


def read_config_file(path: str | Path) -> dict[str, Any]:
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return _layer(raw, str(path))


def env_layer(environ: Mapping[str, str] | None = None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    raw = {k[len(ENV_PREFIX):].lower(): v for k, v in environ.items() if k.startswith(ENV_PREFIX) and k[len(ENV_PREFIX):].lower() in FIELD_NAMES}
    return _layer(raw, "environment")


def resolve_config(
    overrides: Mapping[str, Any] | None = None,
    config_file: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    layers = [
        read_config_file(config_file) if config_file else {},
        env_layer(environ),
        _layer({k: v for k, v in (overrides or {}).items() if v is not None}, "command line"),
    ]
    merged: dict[str, Any] = {}
    for layer in layers:
        merged.update(layer)
    profile = merged.get("profile")
    if profile:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        for key, value in PROFILES[profile].items():
            merged.setdefault(key, value)
    return RunConfig(**merged).validate()
