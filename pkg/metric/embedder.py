# Frozen feature extractors
# Purpose: pluggable stand-ins for pretrained VGG / ArcFace embedders

from dataclasses import dataclass
from typing import Callable, Literal, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from imagecore.image import Image, to_tensor
from utils.errors import EmbedderUnavailableError, RangeError

NORM_TOLERANCE = 1e-5


class EmbedderSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["fixed-random-conv", "external"] = "fixed-random-conv"
    seed: int = 0
    output_dim: int = Field(128, ge=1)
    name: Optional[str] = Field(None, description="Registered name when kind is external")
    in_channels: int = 3


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: torch.Tensor
    normalized: bool = True

    def __post_init__(self):
        if self.normalized:
            norm = float(self.vector.norm())
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise RangeError(f"Embedding flagged normalized but has norm {norm}")


class FixedRandomConvEmbedder(nn.Module):
    """Seeded, randomly initialized and frozen conv feature extractor"""

    def __init__(self, seed: int = 0, output_dim: int = 128, in_channels: int = 3, width: int = 32):
        super().__init__()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.features = nn.Sequential(
                nn.Conv2d(in_channels, width, 3, stride=2, padding=1),
                nn.LeakyReLU(0.2),
                nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
                nn.LeakyReLU(0.2),
                nn.Conv2d(2 * width, 2 * width, 3, padding=1),
                nn.AdaptiveAvgPool2d(4),
            )
            self.projection = nn.Linear(2 * width * 16, output_dim)
        self.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        # frozen: stays in eval mode
        return super().train(False)

    def feature_maps(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) -> (B, output_dim) L2-normalized"""
        z = self.features(x.to(self.projection.weight.dtype)).flatten(1)
        return F.normalize(self.projection(z), dim=-1, eps=1e-12)


_EXTERNAL_EMBEDDERS: dict[str, Callable[[EmbedderSpec], nn.Module]] = {}


def register_embedder(name: str, factory: Callable[[EmbedderSpec], nn.Module]) -> None:
    """Make an external backbone (e.g. a pretrained network) available by name"""
    _EXTERNAL_EMBEDDERS[name] = factory


def build_embedder(spec: EmbedderSpec) -> nn.Module:
    if spec.kind == "fixed-random-conv":
        return FixedRandomConvEmbedder(spec.seed, spec.output_dim, spec.in_channels)
    if spec.name is None or spec.name not in _EXTERNAL_EMBEDDERS:
        raise EmbedderUnavailableError(
            f"External embedder {spec.name!r} is not registered; available: {sorted(_EXTERNAL_EMBEDDERS)}"
        )
    return _EXTERNAL_EMBEDDERS[spec.name](spec)


def embed(spec: EmbedderSpec, img: Image, embedder: Optional[nn.Module] = None) -> Embedding:
    """Deterministic L2-normalized embedding of a signed-range image"""
    if img.value_range != "signed":
        raise RangeError("embed expects a signed-range image")
    model = embedder if embedder is not None else build_embedder(spec)
    with torch.no_grad():
        vector = model(to_tensor(img, torch.float64 if _is_double(model) else torch.float32))[0]
    return Embedding(F.normalize(vector.double(), dim=-1), normalized=True)


def _is_double(model: nn.Module) -> bool:
    param = next(model.parameters(), None)
    return param is not None and param.dtype == torch.float64
