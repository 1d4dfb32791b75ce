# Synthetic LQ/HQ degradation
# Purpose: blur -> downsample -> noise -> JPEG -> upsample, deterministic given a seed

import io
import math
from typing import Literal, Optional

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage
from pydantic import BaseModel, ConfigDict, Field, model_validator

from imagecore.image import RANGE_BOUNDS, Image, convert_range
from imagecore.io import quantize
from utils.errors import RangeError

MIN_RESAMPLED_SIDE = 4


class DegradationParams(BaseModel):
    """One draw of the degradation model's parameters"""

    sigma: float = Field(..., ge=0, description="Gaussian blur std in pixels")
    r: float = Field(..., ge=1, description="Downsample factor")
    delta: float = Field(..., ge=0, description="Noise std on the 0-255 scale")
    q: Optional[int] = Field(None, ge=1, le=100, description="JPEG quality; None skips compression")

    @classmethod
    def identity(cls) -> "DegradationParams":
        return cls(sigma=0.0, r=1.0, delta=0.0, q=None)


class DegradationRanges(BaseModel):
    """Uniform sampling intervals, defaults from the FFHQ training recipe"""

    model_config = ConfigDict(extra="forbid")

    sigma: tuple[float, float] = (1.0, 15.0)
    r: tuple[float, float] = (1.0, 6.0)
    delta: tuple[float, float] = (0.0, 25.0)
    q: tuple[int, int] = (30, 90)

    @model_validator(mode="after")
    def _check_intervals(self):
        for name in ("sigma", "r", "delta", "q"):
            low, high = getattr(self, name)
            if low > high:
                raise RangeError(f"Inverted interval for {name}: [{low}, {high}]")
        if self.sigma[0] < 0 or self.delta[0] < 0 or self.r[0] < 1:
            raise RangeError("sigma and delta must be >= 0 and r must be >= 1")
        if not (1 <= self.q[0] and self.q[1] <= 100):
            raise RangeError(f"JPEG quality interval must lie in [1, 100], got {self.q}")
        return self


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D kernel of size 2*ceil(3*sigma)+1"""
    radius = int(math.ceil(3.0 * sigma))
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(taps ** 2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _convolve_axis(pixels: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * pixels.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(pixels, pad, mode="reflect")
    length = pixels.shape[axis]
    out = np.zeros_like(pixels, dtype=np.float64)
    for k, weight in enumerate(kernel):
        out += weight * np.take(padded, np.arange(k, k + length), axis=axis)
    return out


def gaussian_blur(img: Image, sigma: float) -> Image:
    """Isotropic separable Gaussian blur with reflect-padded borders"""
    if sigma < 0:
        raise RangeError(f"Blur sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img
    pixels = blur_array(img.pixels, sigma)
    return Image.clipped(pixels.astype(img.pixels.dtype), img.value_range)


def blur_array(pixels: np.ndarray, sigma: float) -> np.ndarray:
    """Blur the first two axes of any array"""
    if sigma == 0:
        return pixels
    kernel = gaussian_kernel(sigma)
    return _convolve_axis(_convolve_axis(pixels, kernel, axis=0), kernel, axis=1)


def downsampled_size(height: int, width: int, factor: float) -> tuple[int, int]:
    return _round_half_up(height / factor), _round_half_up(width / factor)


def _resample_target(
    height: int,
    width: int,
    factor: float,
    direction: str,
    size: Optional[tuple[int, int]],
) -> tuple[int, int]:
    if factor < 1:
        raise RangeError(f"Resample factor must be >= 1, got {factor}")
    if direction not in ("down", "up"):
        raise RangeError(f"Unknown resample direction: {direction!r}")
    if direction == "down":
        target = downsampled_size(height, width, factor)
    else:
        target = size or (_round_half_up(height * factor), _round_half_up(width * factor))
    if min(target) < MIN_RESAMPLED_SIDE:
        raise RangeError(f"Resampled size {target} is below {MIN_RESAMPLED_SIDE} pixels")
    return target


def resize_array(pixels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an H×W×C array, no size floor beyond the caller's"""
    if tuple(size) == pixels.shape[:2]:
        return pixels
    tensor = torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1))).unsqueeze(0)
    resized = F.interpolate(tensor, size=tuple(size), mode="bilinear", align_corners=False)
    return resized[0].numpy().transpose(1, 2, 0)


def resample(
    img: Image,
    factor: float,
    direction: Literal["down", "up"],
    size: Optional[tuple[int, int]] = None,
) -> Image:
    """Bilinear resampling by factor; `up` restores `size` when given"""
    target = _resample_target(img.height, img.width, factor, direction, size)
    if target == (img.height, img.width):
        return img
    return Image.clipped(resize_array(img.pixels, target), img.value_range)


def gaussian_noise(shape: tuple[int, ...], delta: float, seed: int, value_range: str = "unit") -> np.ndarray:
    """i.i.d. zero-mean noise, std delta/255 of the range width"""
    low, high = RANGE_BOUNDS[value_range]
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, (delta / 255.0) * (high - low), size=shape)


def add_gaussian_noise(img: Image, delta: float, seed: int) -> Image:
    if delta < 0:
        raise RangeError(f"Noise delta must be >= 0, got {delta}")
    if delta == 0:
        return img
    noise = gaussian_noise(img.shape, delta, seed, img.value_range)
    return Image.clipped(img.pixels + noise.astype(img.pixels.dtype), img.value_range)


def _quantize_unit(pixels: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _jpeg_bytes(data: np.ndarray, q: int) -> bytes:
    pil = PILImage.fromarray(data[:, :, 0] if data.shape[2] == 1 else data)
    buffer = io.BytesIO()
    pil.save(buffer, format="JPEG", quality=int(q))
    return buffer.getvalue()


def _check_quality(q: int) -> None:
    if not 1 <= q <= 100:
        raise RangeError(f"JPEG quality must be in [1, 100], got {q}")


def jpeg_unit_array(pixels: np.ndarray, q: int) -> np.ndarray:
    """JPEG round trip of a unit-range H×W×C array through 8 bits"""
    _check_quality(q)
    with PILImage.open(io.BytesIO(_jpeg_bytes(_quantize_unit(pixels), q))) as pil:
        data = np.asarray(pil)
    if data.ndim == 2:
        data = data[:, :, None]
    return data.astype(pixels.dtype) / 255.0


def jpeg_encoded_size(img: Image, q: int) -> int:
    _check_quality(q)
    return len(_jpeg_bytes(quantize(img), q))


def jpeg_roundtrip(img: Image, q: int) -> Image:
    """Encode to JPEG at quality q on the 8-bit image and decode back"""
    unit = convert_range(img, "unit")
    return convert_range(Image(jpeg_unit_array(unit.pixels, q), "unit"), img.value_range)


def degrade(img_hq: Image, params: DegradationParams, seed: int) -> Image:
    """Apply the stages in the fixed order blur, down, noise, JPEG, up

    Intermediates stay plain unit arrays; only the resampled sides are
    bounded, by MIN_RESAMPLED_SIDE.
    """
    if img_hq.value_range != "unit":
        raise RangeError("degrade expects a unit-range image")
    height, width = img_hq.height, img_hq.width
    low_size = _resample_target(height, width, params.r, "down", None)
    _resample_target(*low_size, params.r, "up", (height, width))

    pixels = np.clip(blur_array(img_hq.pixels, params.sigma), 0.0, 1.0)
    pixels = np.clip(resize_array(pixels, low_size), 0.0, 1.0)
    if params.delta > 0:
        pixels = np.clip(pixels + gaussian_noise(pixels.shape, params.delta, seed).astype(pixels.dtype), 0.0, 1.0)
    if params.q is not None:
        pixels = jpeg_unit_array(pixels, params.q)
    return Image.clipped(resize_array(pixels, (height, width)).astype(img_hq.pixels.dtype), "unit")


def sample_params(rng_seed: int, ranges: Optional[DegradationRanges] = None) -> DegradationParams:
    """Uniform draw of (sigma, r, delta, q) from the given intervals"""
    ranges = ranges or DegradationRanges()
    rng = np.random.default_rng(rng_seed)
    sigma = float(rng.uniform(*ranges.sigma))
    r = float(rng.uniform(*ranges.r))
    delta = float(rng.uniform(*ranges.delta))
    q = int(rng.integers(ranges.q[0], ranges.q[1] + 1))
    return DegradationParams(sigma=sigma, r=r, delta=delta, q=q)
