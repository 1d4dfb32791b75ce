# Cosine triplet loss
# Purpose: -lambda * log(e^cos+ / (e^cos+ + e^cos-)), evaluated as lambda * softplus(cos- - cos+)

from typing import Union

import torch
import torch.nn.functional as F

from metric.embedder import Embedding
from utils.errors import RangeError, ShapeMismatchError

UNIT_NORM_TOLERANCE = 1e-3

Vectors = Union[torch.Tensor, Embedding]


def _as_tensor(f: Vectors) -> torch.Tensor:
    return f.vector if isinstance(f, Embedding) else f


def _check_normalized(name: str, f: torch.Tensor) -> None:
    norms = f.detach().norm(dim=-1)
    if torch.any((norms - 1.0).abs() > UNIT_NORM_TOLERANCE):
        raise RangeError(f"{name} is not L2-normalized (norms {norms.min().item():.6f}..{norms.max().item():.6f})")


def triplet_from_cosines(cos_pos: torch.Tensor, cos_neg: torch.Tensor, lambda_triplet: float = 1.0) -> torch.Tensor:
    return lambda_triplet * F.softplus(cos_neg - cos_pos)


def cosine_triplet_loss(f_p: Vectors, f_a: Vectors, f_n: Vectors, lambda_triplet: float = 1.0) -> torch.Tensor:
    """Positive f_p, anchor f_a, negative f_n; batched inputs are averaged"""
    f_p, f_a, f_n = _as_tensor(f_p), _as_tensor(f_a), _as_tensor(f_n)
    if not (f_p.shape == f_a.shape == f_n.shape):
        raise ShapeMismatchError(f"Triplet shapes differ: {tuple(f_p.shape)}, {tuple(f_a.shape)}, {tuple(f_n.shape)}")
    for name, f in (("positive", f_p), ("anchor", f_a), ("negative", f_n)):
        _check_normalized(name, f)
    cos_pos = (f_p * f_a).sum(dim=-1)
    cos_neg = (f_n * f_a).sum(dim=-1)
    return triplet_from_cosines(cos_pos, cos_neg, lambda_triplet).mean()
