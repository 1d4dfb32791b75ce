# Image and field data model
# Purpose: canonical value types shared by every facefuse package.
# Layout is always height, width, channel; tensors are (N, C, H, W).

from dataclasses import dataclass
from typing import Literal

import numpy as np
import torch

from utils.errors import RangeError, ShapeMismatchError

ValueRange = Literal["unit", "signed"]
ColorSpace = Literal["rgb", "gray"]

RANGE_BOUNDS: dict[str, tuple[float, float]] = {
    "unit": (0.0, 1.0),
    "signed": (-1.0, 1.0),
}

MIN_SIDE = 8


def _check_range_tag(value_range: str) -> None:
    if value_range not in RANGE_BOUNDS:
        raise RangeError(f"Unknown value range tag: {value_range!r}")


@dataclass(frozen=True, eq=False)
class Image:
    """H×W×C raster whose pixels always lie inside value_range"""

    pixels: np.ndarray
    value_range: ValueRange = "unit"
    color_space: ColorSpace = "rgb"

    def __post_init__(self):
        _check_range_tag(self.value_range)
        pixels = np.asarray(self.pixels)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        if pixels.ndim != 3:
            raise ShapeMismatchError(f"Image pixels must be H×W×C, got shape {pixels.shape}")
        if not np.issubdtype(pixels.dtype, np.floating):
            pixels = pixels.astype(np.float64)
        height, width, channels = pixels.shape
        if height < MIN_SIDE or width < MIN_SIDE:
            raise ShapeMismatchError(f"Image must be at least {MIN_SIDE}×{MIN_SIDE}, got {height}×{width}")
        if channels not in (1, 3):
            raise ShapeMismatchError(f"Image must have 1 or 3 channels, got {channels}")
        expected = "gray" if channels == 1 else "rgb"
        if self.color_space != expected:
            object.__setattr__(self, "color_space", expected)
        low, high = RANGE_BOUNDS[self.value_range]
        if not np.all(np.isfinite(pixels)):
            raise RangeError("Image contains non-finite values")
        if pixels.size and (pixels.min() < low or pixels.max() > high):
            raise RangeError(
                f"Pixels outside {self.value_range} range [{low}, {high}]: "
                f"min={pixels.min():.6g} max={pixels.max():.6g}"
            )
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def clipped(cls, pixels, value_range: ValueRange = "unit") -> "Image":
        """Build an Image after clipping to the declared range"""
        _check_range_tag(value_range)
        low, high = RANGE_BOUNDS[value_range]
        return cls(np.clip(np.asarray(pixels), low, high), value_range)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def assert_range(self) -> None:
        low, high = RANGE_BOUNDS[self.value_range]
        assert low <= self.pixels.min() and self.pixels.max() <= high

    def astype(self, dtype) -> "Image":
        return Image(self.pixels.astype(dtype), self.value_range)


@dataclass(frozen=True, eq=False)
class DeformationField:
    """Per-pixel (dx, dy) displacement in pixels"""

    displacements: np.ndarray

    def __post_init__(self):
        disp = np.asarray(self.displacements)
        if disp.ndim != 3 or disp.shape[2] != 2:
            raise ShapeMismatchError(f"Field must be H×W×2, got shape {disp.shape}")
        if not np.all(np.isfinite(disp)):
            raise RangeError("Deformation field contains non-finite values")
        object.__setattr__(self, "displacements", disp)

    @classmethod
    def zeros(cls, height: int, width: int) -> "DeformationField":
        return cls(np.zeros((height, width, 2), dtype=np.float32))

    @property
    def shape(self) -> tuple[int, int]:
        return self.displacements.shape[:2]

    def max_magnitude(self) -> float:
        return float(np.sqrt((self.displacements ** 2).sum(axis=-1)).max())

    def check_matches(self, img: Image) -> None:
        if self.shape != (img.height, img.width):
            raise ShapeMismatchError(
                f"Field shape {self.shape} does not match image {img.height}×{img.width}"
            )


@dataclass(frozen=True, eq=False)
class SemanticMask:
    """Binary map, 1 on identity-critical facial components"""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim == 3 and mask.shape[2] == 1:
            mask = mask[:, :, 0]
        if mask.ndim != 2:
            raise ShapeMismatchError(f"Mask must be H×W, got shape {mask.shape}")
        if not np.all((mask == 0) | (mask == 1)):
            raise RangeError("Semantic mask must contain only 0 and 1")
        object.__setattr__(self, "mask", mask.astype(np.float64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """m×n×d activation block"""

    activations: np.ndarray

    def __post_init__(self):
        act = np.asarray(self.activations)
        if act.ndim != 3:
            raise ShapeMismatchError(f"FeatureMap must be m×n×d, got shape {act.shape}")
        if not np.all(np.isfinite(act)):
            raise RangeError("FeatureMap contains non-finite values")
        object.__setattr__(self, "activations", act)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.activations.shape


def check_same_shape(a: Image, b: Image, what: str = "images") -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def convert_range(img: Image, target: ValueRange) -> Image:
    """Affine remap between unit (0..1) and signed (-1..1)

    unit -> signed -> unit is bit-exact in float64 for x >= 0.25; below that
    2x - 1 may round and the round trip holds to about one ulp.
    """
    _check_range_tag(target)
    if img.value_range == target:
        return img
    if target == "signed":
        pixels = img.pixels * 2.0 - 1.0
    else:
        pixels = (img.pixels + 1.0) / 2.0
    return Image.clipped(pixels, target)


# Tensor bridges

def to_tensor(img: Image, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Image -> (1, C, H, W) tensor"""
    return torch.from_numpy(np.ascontiguousarray(img.pixels.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def from_tensor(tensor: torch.Tensor, value_range: ValueRange = "signed") -> Image:
    """(1, C, H, W) or (C, H, W) tensor -> Image, clipped to value_range"""
    if tensor.ndim == 4:
        if tensor.shape[0] != 1:
            raise ShapeMismatchError(f"Expected a single image batch, got {tensor.shape[0]}")
        tensor = tensor[0]
    pixels = tensor.detach().cpu().numpy().transpose(1, 2, 0)
    return Image.clipped(pixels, value_range)


def field_to_tensor(field: DeformationField, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """DeformationField -> (1, 2, H, W) tensor, channels (dx, dy)"""
    return torch.from_numpy(np.ascontiguousarray(field.displacements.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def field_from_tensor(tensor: torch.Tensor) -> DeformationField:
    if tensor.ndim == 4:
        tensor = tensor[0]
    return DeformationField(tensor.detach().cpu().numpy().transpose(1, 2, 0))


def feature_map_from_tensor(tensor: torch.Tensor) -> FeatureMap:
    if tensor.ndim == 4:
        tensor = tensor[0]
    return FeatureMap(tensor.detach().cpu().numpy().transpose(1, 2, 0))


def mask_to_tensor(mask: SemanticMask, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """SemanticMask -> (1, 1, H, W) tensor"""
    return torch.from_numpy(np.ascontiguousarray(mask.mask)).to(dtype)[None, None]
