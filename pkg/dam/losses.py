# Registration losses
# Purpose: local NCC similarity, field smoothness, and their weighted sum

import math
from typing import NamedTuple

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field, field_validator

from dam.warp import warp
from utils.errors import RangeError, ShapeMismatchError

NCC_EPS = 1e-5
DEFAULT_WINDOW = 9


class DamLossWeights(BaseModel):
    lambda_phi: float = Field(1.0, ge=0, description="Smoothness weight")
    window: int = Field(DEFAULT_WINDOW, gt=0, description="Local NCC window side")

    @field_validator("lambda_phi")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("lambda_phi must be finite")
        return value


class DamLossTerms(NamedTuple):
    total: torch.Tensor
    sim: torch.Tensor
    smooth: torch.Tensor


def local_ncc_map(i_f: torch.Tensor, i_g: torch.Tensor, window: int = DEFAULT_WINDOW, eps: float = NCC_EPS) -> torch.Tensor:
    """Squared local NCC at every position whose window fits inside the image"""
    if i_f.shape != i_g.shape:
        raise ShapeMismatchError(f"NCC inputs differ in shape: {tuple(i_f.shape)} vs {tuple(i_g.shape)}")
    if window % 2 == 0 or window < 1:
        raise RangeError(f"NCC window must be a positive odd integer, got {window}")
    height, width = i_f.shape[-2:]
    if window > min(height, width):
        raise RangeError(f"NCC window {window} is larger than the image {height}×{width}")

    channels = i_f.shape[1]
    box = torch.ones(channels, 1, window, window, dtype=i_f.dtype, device=i_f.device)
    n = float(window * window)

    def box_sum(x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, box, groups=channels)

    sum_f = box_sum(i_f)
    sum_g = box_sum(i_g)
    mean_f = sum_f / n
    mean_g = sum_g / n

    cross = box_sum(i_f * i_g) - mean_f * sum_g
    var_f = box_sum(i_f * i_f) - mean_f * sum_f
    var_g = box_sum(i_g * i_g) - mean_g * sum_g
    return cross * cross / ((var_f + eps) * (var_g + eps))


def local_ncc_loss(i_f: torch.Tensor, i_g_warped: torch.Tensor, window: int = DEFAULT_WINDOW) -> torch.Tensor:
    """Negative mean squared local NCC, in [-1, 0]"""
    return -local_ncc_map(i_f, i_g_warped, window).mean()


def smoothness_loss(field: torch.Tensor) -> torch.Tensor:
    """Mean squared forward-difference gradient norm over (H-1)×(W-1) positions"""
    if field.ndim != 4 or field.shape[1] != 2:
        raise ShapeMismatchError(f"Expected field (B,2,H,W), got {tuple(field.shape)}")
    dx = field[:, :, :-1, 1:] - field[:, :, :-1, :-1]
    dy = field[:, :, 1:, :-1] - field[:, :, :-1, :-1]
    return (dx * dx + dy * dy).sum(dim=1).mean()


def combine_dam_loss(sim, smooth, weights: DamLossWeights):
    return sim + weights.lambda_phi * smooth


def dam_loss_terms(i_f: torch.Tensor, i_g: torch.Tensor, field: torch.Tensor, weights: DamLossWeights) -> DamLossTerms:
    sim = local_ncc_loss(i_f, warp(i_g, field), weights.window)
    smooth = smoothness_loss(field)
    return DamLossTerms(combine_dam_loss(sim, smooth, weights), sim, smooth)


def dam_loss(i_f: torch.Tensor, i_g: torch.Tensor, field: torch.Tensor, weights: DamLossWeights) -> torch.Tensor:
    """L_sim(I_F, I_G warped by field) + lambda_phi * L_smooth(field)"""
    return dam_loss_terms(i_f, i_g, field, weights).total
