"""Run configuration: one JSON document covering every stage's settings.

The file holds optional sections; anything omitted keeps its default, and
unknown keys are rejected loudly. Example:

    {
      "seed": 7,
      "scene": {"height": 64, "width": 64, "curves_min": 2, "curves_max": 3},
      "loss": {"delta_v": 0.5, "delta_d": 3.0},
      "optim": {"epochs": 30, "learning_rate": 0.0003},
      "mean_shift": {"bandwidth": 0.75, "coord_scale": 0.25},
      "resolve": {"beta": 2.0, "threshold_a": 0.7},
      "pipeline": {"seg_threshold": 0.5},
      "augment": {"rotation_degrees": 10.0}   // or null to disable
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .clustering import MeanShiftConfig
from .grids import AugmentParams
from .intersections import ResolveConfig
from .network import LossConfig
from .optim import OptimConfig
from .pipeline import PipelineConfig
from .synth import SceneSpec


class ConfigError(Exception):
    """Malformed or invalid run configuration."""


@dataclass
class RunConfig:
    seed: int = 0
    scene: SceneSpec = field(default_factory=SceneSpec)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    mean_shift: MeanShiftConfig = field(default_factory=MeanShiftConfig)
    resolve: ResolveConfig = field(default_factory=ResolveConfig)
    seg_threshold: float = 0.5
    augment: AugmentParams | None = field(default_factory=AugmentParams)

    def __post_init__(self):
        if not 0.0 < self.seg_threshold < 1.0:
            raise ValueError("seg_threshold must lie in (0, 1)")

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(seg_threshold=self.seg_threshold,
                              mean_shift=self.mean_shift, resolve=self.resolve)


_SECTIONS = {
    "scene": SceneSpec,
    "loss": LossConfig,
    "optim": OptimConfig,
    "mean_shift": MeanShiftConfig,
    "resolve": ResolveConfig,
    "augment": AugmentParams,
}


def _build_section(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name: f.type for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")
    for key, value in data.items():
        if not isinstance(value, (bool, int, float)):
            raise ConfigError(f"{section}.{key} must be a number or boolean")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} section: {exc}") from exc


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    allowed = {"seed", "pipeline"} | set(_SECTIONS)
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    kwargs = {}
    if "seed" in doc:
        if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool) or doc["seed"] < 0:
            raise ConfigError("seed must be a nonnegative integer")
        kwargs["seed"] = doc["seed"]
    for section, cls in _SECTIONS.items():
        if section not in doc:
            continue
        if section == "augment" and doc[section] is None:
            kwargs["augment"] = None
            continue
        kwargs[section] = _build_section(cls, doc[section], section)
    if "pipeline" in doc:
        pipe = doc["pipeline"]
        if not isinstance(pipe, dict) or set(pipe) - {"seg_threshold"}:
            raise ConfigError("pipeline section supports only 'seg_threshold'")
        if "seg_threshold" in pipe:
            value = pipe["seg_threshold"]
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError("pipeline.seg_threshold must be a number")
            kwargs["seg_threshold"] = float(value)
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path) -> RunConfig:
    """Read and validate a JSON run config; ConfigError on bad content."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return run_config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def run_config_to_dict(cfg: RunConfig) -> dict:
    doc = {"seed": cfg.seed, "pipeline": {"seg_threshold": cfg.seg_threshold}}
    for section, _ in _SECTIONS.items():
        value = getattr(cfg, section)
        doc[section] = None if value is None else dataclasses.asdict(value)
    return doc
