# Stage-2 objectives
# Purpose: L1, adversarial, identity and optional perceptual terms, and their weighted total

from typing import NamedTuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from config.train_config import LossWeights
from imagecore.image import Image, to_tensor
from utils.errors import ShapeMismatchError

Scalar = Union[float, torch.Tensor]


class LossComponents(NamedTuple):
    l1: Scalar
    adv: Scalar
    id: Scalar
    triplet: Scalar
    perceptual: Scalar = 0.0


def _as_tensor(x: Union[Image, torch.Tensor]) -> torch.Tensor:
    return to_tensor(x, torch.float64) if isinstance(x, Image) else x


def _check_pair(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: shapes differ {tuple(a.shape)} vs {tuple(b.shape)}")


def l1_loss(i_hq: Union[Image, torch.Tensor], i_out: Union[Image, torch.Tensor]) -> torch.Tensor:
    """Mean absolute difference"""
    i_hq, i_out = _as_tensor(i_hq), _as_tensor(i_out)
    _check_pair(i_hq, i_out, "l1_loss")
    return (i_hq - i_out).abs().mean()


def generator_adversarial_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    """-E softplus(D(I_out))"""
    return -F.softplus(fake_logits).mean()


def discriminator_adversarial_loss(fake_logits: torch.Tensor, real_logits: torch.Tensor) -> torch.Tensor:
    return F.softplus(fake_logits).mean() + F.softplus(-real_logits).mean()


def adversarial_losses(disc: nn.Module, i_out: torch.Tensor, i_hq: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(generator term, discriminator term); the discriminator term sees a detached I_out"""
    gen_loss = generator_adversarial_loss(disc(i_out))
    disc_loss = discriminator_adversarial_loss(disc(i_out.detach()), disc(i_hq))
    return gen_loss, disc_loss


def identity_loss(embedder: nn.Module, i_hq: Union[Image, torch.Tensor], i_out: Union[Image, torch.Tensor]) -> torch.Tensor:
    """L1 distance between identity embeddings"""
    i_hq, i_out = _as_tensor(i_hq), _as_tensor(i_out)
    _check_pair(i_hq, i_out, "identity_loss")
    return (embedder(i_hq) - embedder(i_out)).abs().mean()


def perceptual_loss(embedder: nn.Module, i_hq: torch.Tensor, i_out: torch.Tensor) -> torch.Tensor:
    """L1 between intermediate feature maps of a frozen embedder"""
    _check_pair(i_hq, i_out, "perceptual_loss")
    return (embedder.feature_maps(i_hq) - embedder.feature_maps(i_out)).abs().mean()


def total_tgrn_loss(components: LossComponents, weights: LossWeights) -> Scalar:
    """lambda_l1*L1 + lambda_adv*L_adv + lambda_id*L_id + L_triplet (+ perceptual hook)"""
    total = (
        weights.lambda_l1 * components.l1
        + weights.lambda_adv * components.adv
        + weights.lambda_id * components.id
        + components.triplet
    )
    if weights.lambda_perceptual > 0:
        total = total + weights.lambda_perceptual * components.perceptual
    return total
