# Training configuration schema
# Purpose: hyperparameters with desk-scale defaults, YAML files, and dotted-key overrides

from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config.ablations import ABLATION_VARIANTS
from dam.network import RegistrationNetConfig
from metric.embedder import EmbedderSpec
from tgrn.network import TgrnConfig
from utils.errors import ConfigError

SCHEMA_VERSION = 1

DESK_ITERATIONS = {"dam": 2_000, "tgrn": 5_000}
FULL_SCALE_ITERATIONS = {"dam": 400_000, "tgrn": 600_000}


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda_l1: float = Field(0.1, ge=0)
    lambda_adv: float = Field(0.1, ge=0)
    lambda_id: float = Field(10.0, ge=0)
    lambda_triplet: float = Field(1.0, ge=0)
    lambda_phi: float = Field(1.0, ge=0)
    lambda_perceptual: float = Field(0.0, ge=0, description="Optional perceptual hook, off by default")


class TrainConfig(BaseModel):
    """All training hyperparameters; desk-scale defaults"""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    stage: Literal["dam", "tgrn"] = "dam"
    learning_rate: float = Field(5e-4, gt=0)
    batch_size: int = Field(4, ge=1)
    iterations: Optional[int] = Field(None, ge=0, description="Defaults to 2k (dam) / 5k (tgrn)")
    image_size: int = Field(64, ge=8)
    seed: int = 0
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    ncc_window: int = Field(9, ge=1)

    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    disc_learning_rate: Optional[float] = Field(None, gt=0)
    disc_channels: int = Field(16, ge=4)

    variant: Literal["A", "B", "C", "D"] = "D"
    positive: Literal["anchor_positive", "ground_truth"] = "anchor_positive"
    negative: Literal["identity", "warp"] = "identity"

    num_pairs: int = Field(20, ge=1)
    warp_magnitude: float = Field(3.0, ge=0)
    texture_strength: float = Field(0.05, ge=0)
    identity_blur_sigma: float = Field(1.0, ge=0)

    log_every: int = Field(10, ge=1)

    dam: RegistrationNetConfig = Field(default_factory=RegistrationNetConfig)
    tgrn: TgrnConfig = Field(default_factory=TgrnConfig)
    feature_embedder: EmbedderSpec = Field(default_factory=lambda: EmbedderSpec(seed=1))
    identity_embedder: EmbedderSpec = Field(default_factory=lambda: EmbedderSpec(seed=2))

    @model_validator(mode="after")
    def _resolve_defaults(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"Unsupported config schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        if self.iterations is None:
            self.iterations = DESK_ITERATIONS[self.stage]
        return self

    @property
    def total_iterations(self) -> int:
        return int(self.iterations)

    @classmethod
    def full_scale(cls, stage: str = "dam", **overrides) -> "TrainConfig":
        """Full-scale documented defaults: 512×512, batch 8, 400k / 600k iterations"""
        values = {"stage": stage, "batch_size": 8, "iterations": FULL_SCALE_ITERATIONS[stage], "image_size": 512}
        values.update(overrides)
        return cls(**values)

    def with_variant(self, variant: str) -> "TrainConfig":
        if variant not in ABLATION_VARIANTS:
            raise ConfigError(f"Unknown ablation variant {variant!r}")
        preset = ABLATION_VARIANTS[variant]
        data = self.model_dump()
        data["variant"] = variant
        for key in ("positive", "negative"):
            if key in preset:
                data[key] = preset[key]
        if "lambda_triplet" in preset:
            data["loss_weights"]["lambda_triplet"] = preset["lambda_triplet"]
        return TrainConfig.model_validate(data)


def _set_dotted(data: dict[str, Any], dotted_key: str, value: Any) -> None:
    keys = dotted_key.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"Cannot override {dotted_key}: {key} is not a section")
    node[keys[-1]] = value


def parse_overrides(overrides: list[str]) -> dict[str, Any]:
    """["loss_weights.lambda_id=5", ...] -> nested dict with YAML-typed values"""
    data: dict[str, Any] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _set_dotted(data, key.strip(), yaml.safe_load(raw))
    return data


def merge_dicts(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            merge_dicts(base[key], value)
        else:
            base[key] = value
    return base


def load_config(path: Optional[str | Path] = None, overrides: Optional[list[str]] = None, **flags) -> TrainConfig:
    """YAML file (optional) < explicit flags < --set overrides; None flags are ignored"""
    data: dict[str, Any] = {k: v for k, v in flags.items() if v is not None}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must contain a mapping")
        data = merge_dicts(loaded, data)
    if overrides:
        data = merge_dicts(data, parse_overrides(overrides))
    try:
        return TrainConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid training config: {e}") from e


def dump_config(config: TrainConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True))
