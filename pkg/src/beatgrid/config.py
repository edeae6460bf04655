"""Versioned JSON run configuration with cross-section validation.

Example::

    {
      "version": 1,
      "seed": 0,
      "pipeline": {"segment_length": 10.0, "hop": 1.0},
      "codec": {"scheme": "v3", "step": 0.01, "segment_length": 10.0},
      "model": {"d_model": 128, "num_layers": 3},
      "train": {"epochs": 50, "batch_size": 32},
      "sweep": {"scheme": ["v1", "v3"], "step": [0.01, 0.05]}
    }

Unknown keys are rejected. ``model.vocab_size`` may be omitted; it is
derived from the codec section and must match it when given.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from beatgrid.augment import AugmentConfig
from beatgrid.codec import CodecConfig, Vocabulary
from beatgrid.decode import DecodeConfig, StitchConfig
from beatgrid.errors import ConfigError
from beatgrid.evaluation import EvalConfig
from beatgrid.model.training import TrainConfig
from beatgrid.model.transformer import ModelConfig
from beatgrid.pipeline import PipelineConfig

CONFIG_VERSION = 1

SWEEP_AXES = ("scheme", "segment_length", "step", "augment")
AUGMENT_PRESETS = {
    "none": {},
    "transpose": {"enable_transpose": True},
    "transpose+shift": {"enable_transpose": True, "enable_shift": True},
    "transpose+shift+scale": {"enable_transpose": True, "enable_shift": True, "enable_scale": True},
}


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    model: dict = field(default_factory=dict)  # ModelConfig fields; vocab_size optional
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    stitch: StitchConfig = field(default_factory=StitchConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    seed: int = 0
    version: int = CONFIG_VERSION

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(self.codec)

    def model_config(self) -> ModelConfig:
        fields = dict(self.model)
        fields.setdefault("vocab_size", len(self.vocabulary()))
        return ModelConfig(**fields)

    def validate(self) -> RunConfig:
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"config version {self.version}, expected {CONFIG_VERSION}")
        if abs(self.codec.segment_length - self.pipeline.segment_length) > 1e-9:
            raise ConfigError("codec.segment_length must equal pipeline.segment_length")
        vocab_size = len(self.vocabulary())
        if self.model.get("vocab_size", vocab_size) != vocab_size:
            raise ConfigError(
                f"model.vocab_size={self.model['vocab_size']} but codec vocabulary has {vocab_size}"
            )
        mc = self.model_config()
        if self.decode.max_target_len > mc.max_target_len:
            raise ConfigError("decode.max_target_len exceeds model.max_target_len")
        if self.stitch.hop > self.codec.segment_length:
            raise ConfigError("stitch.hop must not exceed the segment length")
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise ConfigError(f"sweep: unknown axis {axis!r}; expected one of {SWEEP_AXES}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep.{axis} must be a non-empty list")
            if axis == "augment" and not set(values) <= set(AUGMENT_PRESETS):
                raise ConfigError(f"sweep.augment values must be in {sorted(AUGMENT_PRESETS)}")
        return self

    def to_dict(self) -> dict:
        def section(obj):
            d = dataclasses.asdict(obj)
            return {k: (v.value if hasattr(v, "value") else v) for k, v in d.items()}

        return {
            "version": self.version,
            "seed": self.seed,
            "paths": dict(self.paths),
            "pipeline": section(self.pipeline),
            "augment": section(self.augment),
            "codec": section(self.codec),
            "model": dict(self.model),
            "train": section(self.train),
            "decode": section(self.decode),
            "stitch": section(self.stitch),
            "eval": section(self.eval),
            "sweep": dict(self.sweep),
        }

    def replace(self, **sections: Any) -> RunConfig:
        return dataclasses.replace(self, **sections)


_SECTIONS = {
    "pipeline": PipelineConfig,
    "augment": AugmentConfig,
    "codec": CodecConfig,
    "train": TrainConfig,
    "decode": DecodeConfig,
    "stitch": StitchConfig,
    "eval": EvalConfig,
}
_MODEL_FIELDS = {f.name for f in dataclasses.fields(ModelConfig)}


def _build(cls, data: Any, name: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def from_dict(data: dict, seed: int | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    allowed = set(_SECTIONS) | {"model", "sweep", "paths", "seed", "version"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    sections = {name: data[name] for name in _SECTIONS if name in data}
    pipeline = _build(PipelineConfig, sections.get("pipeline", {}), "pipeline")
    # the codec inherits the window length unless it sets its own
    codec = sections.get("codec", {})
    if isinstance(codec, dict) and "segment_length" not in codec:
        sections["codec"] = {**codec, "segment_length": pipeline.segment_length}
    kwargs: dict[str, Any] = {name: _build(_SECTIONS[name], v, name) for name, v in sections.items()}
    model = data.get("model", {})
    if not isinstance(model, dict) or set(model) - _MODEL_FIELDS:
        raise ConfigError(f"model: unknown keys {sorted(set(model) - _MODEL_FIELDS)}")
    kwargs["model"] = dict(model)
    kwargs["sweep"] = dict(data.get("sweep", {}))
    kwargs["paths"] = dict(data.get("paths", {}))
    kwargs["version"] = data.get("version", CONFIG_VERSION)
    kwargs["seed"] = int(data.get("seed", 0)) if seed is None else seed
    cfg = RunConfig(**kwargs)
    try:
        cfg.model_config()
    except TypeError as exc:
        raise ConfigError(f"model: {exc}") from None
    return cfg.validate()


def load_config(path: str | Path | None, seed: int | None = None) -> RunConfig:
    if path is None:
        return from_dict({}, seed)
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data, seed)
