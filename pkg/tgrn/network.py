# Texture-prior guided restoration network
# Purpose: U-Net over I_F whose encoder features are fused, level by level, with
# texture features extracted from the warped prior I_warp.

from typing import Literal, NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator

from imagecore.image import FeatureMap, Image, check_same_shape, feature_map_from_tensor, from_tensor, to_tensor
from utils.errors import ConfigError, RangeError, ShapeMismatchError


class TgrnConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    levels: int = Field(3, ge=1)
    channels_per_level: list[int] = Field(default_factory=lambda: [16, 32, 64])
    mlp_hidden: int = Field(64, ge=1, description="Hidden width of each fusion MLP")
    fusion_activation: Literal["sigmoid", "linear"] = "sigmoid"
    tam_residual_blocks: int = Field(2, ge=0)
    image_channels: int = 3
    bias: bool = True
    residual_output: bool = Field(True, description="Predict a correction added to I_F")

    @model_validator(mode="after")
    def _check_levels(self):
        if self.levels != len(self.channels_per_level):
            raise ConfigError(f"levels={self.levels} but {len(self.channels_per_level)} channel widths given")
        if any(d < 4 for d in self.channels_per_level):
            raise ConfigError(f"every channel width must be >= 4, got {self.channels_per_level}")
        return self


class FusionWeights(NamedTuple):
    w_e: torch.Tensor
    w_t: torch.Tensor


def _conv(in_ch: int, out_ch: int, bias: bool, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=bias)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, bias: bool = True):
        super().__init__()
        self.body = nn.Sequential(
            _conv(channels, channels, bias),
            nn.LeakyReLU(0.2),
            _conv(channels, channels, bias),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class Encoder(nn.Module):
    """Z_e^i at 1/2^i resolution with d_i channels"""

    def __init__(self, config: TgrnConfig):
        super().__init__()
        self.stages = nn.ModuleList()
        in_ch = config.image_channels
        for i, width in enumerate(config.channels_per_level):
            self.stages.append(nn.Sequential(
                _conv(in_ch, width, config.bias, stride=1 if i == 0 else 2),
                nn.LeakyReLU(0.2),
                _conv(width, width, config.bias),
                nn.LeakyReLU(0.2),
            ))
            in_ch = width

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features


class TextureAttentionModule(nn.Module):
    """Per level: two convs, adaptive max pool to the encoder's size, residual blocks"""

    def __init__(self, config: TgrnConfig):
        super().__init__()
        self.levels = config.levels
        self.stems = nn.ModuleList()
        self.refiners = nn.ModuleList()
        for width in config.channels_per_level:
            self.stems.append(nn.Sequential(
                _conv(config.image_channels, width, config.bias),
                nn.LeakyReLU(0.2),
                _conv(width, width, config.bias),
                nn.LeakyReLU(0.2),
            ))
            self.refiners.append(nn.Sequential(
                *[ResidualBlock(width, config.bias) for _ in range(config.tam_residual_blocks)]
            ))

    def forward(self, i_warp: torch.Tensor, target_shapes: list[tuple[int, int]]) -> list[torch.Tensor]:
        if len(target_shapes) != self.levels:
            raise ShapeMismatchError(f"TAM has {self.levels} levels but {len(target_shapes)} target shapes were given")
        features = []
        for stem, refiner, shape in zip(self.stems, self.refiners, target_shapes):
            z = F.adaptive_max_pool2d(stem(i_warp), tuple(shape))
            features.append(refiner(z))
        return features


class FusionMLP(nn.Module):
    """Three fully connected layers mapping [v_e, v_t] to [w_e, w_t]"""

    def __init__(self, channels: int, hidden: int, activation: str = "sigmoid"):
        super().__init__()
        self.channels = channels
        self.activation = activation
        self.layers = nn.Sequential(
            nn.Linear(2 * channels, hidden),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
            nn.Linear(hidden, 2 * channels),
        )

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        out = self.layers(v)
        if self.activation == "sigmoid":
            out = torch.sigmoid(out)
        return out


class Decoder(nn.Module):
    """Mirror of the encoder: nearest upsampling + conv, fused features as skips"""

    def __init__(self, config: TgrnConfig):
        super().__init__()
        widths = config.channels_per_level
        self.ups = nn.ModuleList()
        self.merges = nn.ModuleList()
        for i in range(config.levels - 2, -1, -1):
            self.ups.append(nn.Sequential(_conv(widths[i + 1], widths[i], config.bias), nn.LeakyReLU(0.2)))
            self.merges.append(nn.Sequential(
                _conv(2 * widths[i], widths[i], config.bias),
                nn.LeakyReLU(0.2),
                _conv(widths[i], widths[i], config.bias),
                nn.LeakyReLU(0.2),
            ))
        self.head = nn.Conv2d(widths[0], config.image_channels, 3, padding=1)

    def forward(self, fused: list[torch.Tensor]) -> torch.Tensor:
        x = fused[-1]
        for up, merge, skip in zip(self.ups, self.merges, reversed(fused[:-1])):
            x = F.interpolate(x, size=skip.shape[-2:], mode="nearest")
            x = merge(torch.cat([up(x), skip], dim=1))
        return self.head(x)


class TGRN(nn.Module):
    def __init__(self, config: TgrnConfig | None = None):
        super().__init__()
        self.config = config or TgrnConfig()
        self.encoder = Encoder(self.config)
        self.tam = TextureAttentionModule(self.config)
        self.fusion = nn.ModuleList(
            FusionMLP(width, self.config.mlp_hidden, self.config.fusion_activation)
            for width in self.config.channels_per_level
        )
        self.decoder = Decoder(self.config)

    def forward(self, i_f: torch.Tensor, i_warp: torch.Tensor) -> torch.Tensor:
        return tgrn_forward(self, i_f, i_warp)


# Functional surface

def encode(net: TGRN, i_f: torch.Tensor) -> list[torch.Tensor]:
    min_side = 2 ** (net.config.levels - 1)
    if min(i_f.shape[-2:]) < min_side:
        raise ShapeMismatchError(f"Image {tuple(i_f.shape[-2:])} too small for {net.config.levels} levels")
    return net.encoder(i_f)


def tam_extract(tam: TextureAttentionModule, i_warp: torch.Tensor, target_shapes: list[tuple[int, int]]) -> list[torch.Tensor]:
    return tam(i_warp, target_shapes)


def global_avg_pool(z: torch.Tensor) -> torch.Tensor:
    """(B, d, m, n) -> (B, d) channel means"""
    return z.mean(dim=(-2, -1))


def fusion_weights(mlp: FusionMLP, v_e: torch.Tensor, v_t: torch.Tensor) -> FusionWeights:
    if v_e.shape != v_t.shape:
        raise ShapeMismatchError(f"Descriptor shapes differ: {tuple(v_e.shape)} vs {tuple(v_t.shape)}")
    if v_e.shape[-1] != mlp.channels:
        raise ShapeMismatchError(f"MLP expects {mlp.channels} channels, got {v_e.shape[-1]}")
    out = mlp(torch.cat([v_e, v_t], dim=-1))
    w_e, w_t = out.split(mlp.channels, dim=-1)
    return FusionWeights(w_e, w_t)


def fuse(z_e: torch.Tensor, z_t: torch.Tensor, w: FusionWeights) -> torch.Tensor:
    """Z_m = w_e ⊙ Z_e + w_t ⊙ Z_t, weights broadcast per channel"""
    if z_e.shape != z_t.shape:
        raise ShapeMismatchError(f"Feature shapes differ: {tuple(z_e.shape)} vs {tuple(z_t.shape)}")
    channels = z_e.shape[1]
    if w.w_e.shape[-1] != channels or w.w_t.shape[-1] != channels:
        raise ShapeMismatchError(f"Fusion weights have {w.w_e.shape[-1]} entries for {channels} channels")
    return w.w_e[..., None, None] * z_e + w.w_t[..., None, None] * z_t


def fuse_level(mlp: FusionMLP, z_e: torch.Tensor, z_t: torch.Tensor) -> torch.Tensor:
    weights = fusion_weights(mlp, global_avg_pool(z_e), global_avg_pool(z_t))
    return fuse(z_e, z_t, weights)


def tgrn_forward(net: TGRN, i_f: torch.Tensor, i_warp: torch.Tensor) -> torch.Tensor:
    if i_f.shape != i_warp.shape:
        raise ShapeMismatchError(f"I_F and I_warp differ in shape: {tuple(i_f.shape)} vs {tuple(i_warp.shape)}")
    z_e = encode(net, i_f)
    z_t = tam_extract(net.tam, i_warp, [tuple(z.shape[-2:]) for z in z_e])
    fused = [fuse_level(mlp, e, t) for mlp, e, t in zip(net.fusion, z_e, z_t)]
    out = net.decoder(fused)
    if net.config.residual_output:
        out = out + i_f
    return out


def restore_image(net: TGRN, i_f: Image, i_warp: Image) -> Image:
    """Image-level inference; inputs and output in signed range"""
    check_same_shape(i_f, i_warp, "I_F and I_warp")
    if i_f.value_range != "signed" or i_warp.value_range != "signed":
        raise RangeError("restore_image expects signed-range images")
    dtype = next(net.parameters()).dtype
    with torch.no_grad():
        out = tgrn_forward(net, to_tensor(i_f, dtype), to_tensor(i_warp, dtype))
    return from_tensor(out, "signed")


def encode_features(net: TGRN, i_f: Image) -> list[FeatureMap]:
    """Per-level encoder features of one signed-range image"""
    if i_f.value_range != "signed":
        raise RangeError("encode_features expects a signed-range image")
    dtype = next(net.parameters()).dtype
    with torch.no_grad():
        return [feature_map_from_tensor(z) for z in encode(net, to_tensor(i_f, dtype))]
