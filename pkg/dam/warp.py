# Differentiable dense warping
# Purpose: bilinear sampling of an image at p + phi(p), border-clamped, in pixel units

import torch

from imagecore.image import (
    DeformationField,
    Image,
    field_from_tensor,
    field_to_tensor,
    from_tensor,
    to_tensor,
)
from utils.errors import ShapeMismatchError


def _check_shapes(img: torch.Tensor, field: torch.Tensor) -> None:
    if img.ndim != 4 or field.ndim != 4 or field.shape[1] != 2:
        raise ShapeMismatchError(f"Expected img (B,C,H,W) and field (B,2,H,W), got {tuple(img.shape)} and {tuple(field.shape)}")
    if img.shape[-2:] != field.shape[-2:]:
        raise ShapeMismatchError(f"Field spatial shape {tuple(field.shape[-2:])} does not match image {tuple(img.shape[-2:])}")
    if field.shape[0] not in (1, img.shape[0]):
        raise ShapeMismatchError(f"Field batch {field.shape[0]} does not match image batch {img.shape[0]}")


def identity_grid(height: int, width: int, dtype=torch.float32, device=None) -> tuple[torch.Tensor, torch.Tensor]:
    ys, xs = torch.meshgrid(
        torch.arange(height, dtype=dtype, device=device),
        torch.arange(width, dtype=dtype, device=device),
        indexing="ij",
    )
    return xs, ys


def warp(img: torch.Tensor, field: torch.Tensor) -> torch.Tensor:
    """out(p) = img(p + field(p)); field channels are (dx, dy) in pixels"""
    _check_shapes(img, field)
    batch, channels, height, width = img.shape
    field = field.to(img.dtype).expand(batch, -1, -1, -1)
    xs, ys = identity_grid(height, width, img.dtype, img.device)

    x = (xs + field[:, 0]).clamp(0, width - 1)
    y = (ys + field[:, 1]).clamp(0, height - 1)
    x0 = x.floor()
    y0 = y.floor()
    wx = (x - x0).unsqueeze(1)
    wy = (y - y0).unsqueeze(1)

    x0i = x0.long()
    y0i = y0.long()
    x1i = (x0i + 1).clamp(max=width - 1)
    y1i = (y0i + 1).clamp(max=height - 1)

    flat = img.reshape(batch, channels, height * width)

    def gather(yi: torch.Tensor, xi: torch.Tensor) -> torch.Tensor:
        index = (yi * width + xi).reshape(batch, 1, height * width).expand(batch, channels, height * width)
        return flat.gather(2, index).reshape(batch, channels, height, width)

    top = (1 - wx) * gather(y0i, x0i) + wx * gather(y0i, x1i)
    bottom = (1 - wx) * gather(y1i, x0i) + wx * gather(y1i, x1i)
    return (1 - wy) * top + wy * bottom


def warp_image(img: Image, field: DeformationField) -> Image:
    field.check_matches(img)
    out = warp(to_tensor(img, torch.float64), field_to_tensor(field, torch.float64))
    return from_tensor(out, img.value_range)


def invert_field(field: torch.Tensor, iterations: int = 20) -> torch.Tensor:
    """Approximate inverse by fixed-point iteration psi(p) = -phi(p + psi(p))"""
    inverse = -field
    for _ in range(iterations):
        inverse = -warp(field, inverse)
    return inverse


def invert_deformation(field: DeformationField, iterations: int = 20) -> DeformationField:
    return field_from_tensor(invert_field(field_to_tensor(field, torch.float64), iterations))


def endpoint_error(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean Euclidean distance between two (B,2,H,W) displacement fields"""
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"Field shapes differ: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    return torch.sqrt(((pred - gt) ** 2).sum(dim=1)).mean()
