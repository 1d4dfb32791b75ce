# Stage 2: texture-prior guided restoration
# Purpose: train TGRN on (I_F, I_warp) with the frozen DAM, alternating generator and critic updates

import math
from pathlib import Path
from typing import Any, Optional

import torch
from tqdm import tqdm

from config.settings import get_logger
from config.train_config import TrainConfig
from dam.warp import warp
from metric.anchor import anchor_positive_tensor
from metric.embedder import build_embedder
from metric.triplet import cosine_triplet_loss
from tgrn.network import TGRN
from train.checkpoint import DamCheckpoint, TgrnCheckpoint, parameter_checksum, save_checkpoint
from train.discriminator import Discriminator
from train.losses import (
    LossComponents,
    discriminator_adversarial_loss,
    generator_adversarial_loss,
    identity_loss,
    l1_loss,
    perceptual_loss,
    total_tgrn_loss,
)
from train.priors import PairBatch, PairProvider, iterate_batches
from utils.errors import CheckpointError, ConfigError, MissingMaskError, TrainingDivergedError
from utils.file_manager import append_jsonl, ensure_dir

logger = get_logger(__name__)

TGRN_CHECKPOINT = "tgrn.ckpt"
TGRN_LOG = "tgrn_log.jsonl"


def _value(x) -> float:
    return x.detach().item() if isinstance(x, torch.Tensor) else float(x)


def freeze(module: torch.nn.Module) -> torch.nn.Module:
    module.eval()
    module.requires_grad_(False)
    return module


def triplet_roles(
    config: TrainConfig, batch: PairBatch, i_warp: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """(positive, negative) images for the configured variant"""
    if config.positive == "anchor_positive":
        if batch.mask is None:
            raise MissingMaskError(
                f"Pairs {batch.indices} have no semantic mask; anchor-positive triplets need masks or landmarks"
            )
        positive = anchor_positive_tensor(batch.i_f, i_warp, batch.mask)
    else:
        positive = batch.i_hq
    negative = batch.i_f if config.negative == "identity" else i_warp
    return positive, negative


def train_stage2(config: TrainConfig, dam_ckpt: DamCheckpoint, data: PairProvider, out_dir=None) -> TgrnCheckpoint:
    """Adam on lambda_l1*L1 + lambda_adv*L_adv + lambda_id*L_id + L_triplet; logs every component"""
    if config.stage != "tgrn":
        raise ConfigError(f"train_stage2 needs stage 'tgrn', got {config.stage!r}")
    out_path: Optional[Path] = ensure_dir(out_dir) if out_dir is not None else None
    log_path = out_path / TGRN_LOG if out_path else None
    if log_path is not None and log_path.exists():
        log_path.unlink()

    dam = freeze(dam_ckpt.net)
    dam_checksum = parameter_checksum(dam)
    weights = config.loss_weights
    use_triplet = weights.lambda_triplet > 0

    torch.manual_seed(config.seed)
    net = TGRN(config.tgrn)
    net.train()
    disc = Discriminator(config.tgrn.image_channels, config.disc_channels)
    feature_embedder = freeze(build_embedder(config.feature_embedder))
    identity_embedder = freeze(build_embedder(config.identity_embedder))

    adam = dict(betas=config.adam_betas, eps=config.adam_eps)
    opt_g = torch.optim.Adam(net.parameters(), lr=config.learning_rate, **adam)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.disc_learning_rate or config.learning_rate, **adam)

    batches = iterate_batches(data, config.batch_size, config.seed)
    history: list[dict[str, Any]] = []
    steps = config.total_iterations

    logger.info(
        "Stage 2 (variant %s): %d iterations on %d pairs, positive=%s negative=%s",
        config.variant, steps, len(data), config.positive, config.negative,
    )
    for step in tqdm(range(steps), desc="train-tgrn", disable=steps == 0):
        batch = next(batches)
        with torch.no_grad():
            i_warp = warp(batch.i_g, dam(batch.i_f, batch.i_g))
        i_out = net(batch.i_f, i_warp)

        disc_value = 0.0
        if weights.lambda_adv > 0:
            opt_d.zero_grad()
            d_loss = discriminator_adversarial_loss(disc(i_out.detach()), disc(batch.i_hq))
            d_loss.backward()
            opt_d.step()
            disc_value = d_loss.detach().item()

        adv = generator_adversarial_loss(disc(i_out)) if weights.lambda_adv > 0 else torch.zeros(())
        triplet = torch.zeros(())
        if use_triplet:
            positive, negative = triplet_roles(config, batch, i_warp)
            triplet = cosine_triplet_loss(
                feature_embedder(positive), feature_embedder(i_out), feature_embedder(negative), weights.lambda_triplet
            )
        components = LossComponents(
            l1=l1_loss(batch.i_hq, i_out),
            adv=adv,
            id=identity_loss(identity_embedder, batch.i_hq, i_out),
            triplet=triplet,
            perceptual=perceptual_loss(feature_embedder, batch.i_hq, i_out) if weights.lambda_perceptual > 0 else 0.0,
        )
        total = total_tgrn_loss(components, weights)

        record = {
            "step": step,
            "l1": _value(components.l1),
            "adv": _value(components.adv),
            "id": _value(components.id),
            "triplet": _value(components.triplet),
            "perceptual": _value(components.perceptual),
            "total": _value(total),
            "disc": disc_value,
        }
        if not all(math.isfinite(v) for v in record.values()):
            raise TrainingDivergedError(f"TGRN loss is not finite at step {step}: {record}")

        opt_g.zero_grad()
        total.backward()
        opt_g.step()

        if step % config.log_every == 0 or step == steps - 1:
            history.append(record)
            if log_path is not None:
                append_jsonl(record, log_path)
            logger.debug("tgrn step %d: %s", step, record)

    if parameter_checksum(dam) != dam_checksum:
        raise CheckpointError("DAM parameters changed during stage-2 training")

    net.eval()
    ckpt_path = None
    if out_path is not None:
        extra = {"history": history, "dam_checksum": dam_checksum}
        ckpt_path = save_checkpoint("tgrn", net, config, out_path / TGRN_CHECKPOINT, extra)
    return TgrnCheckpoint(net=net, config=config, history=history, path=ckpt_path, dam_checksum=dam_checksum)
