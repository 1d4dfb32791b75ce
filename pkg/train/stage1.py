# Stage 1: deformable alignment module
# Purpose: fit R_theta so that warp(I_G, phi) matches I_F under local NCC + smoothness

import math
from pathlib import Path
from typing import Any, Optional

import torch
from tqdm import tqdm

from config.settings import get_logger
from config.train_config import TrainConfig
from dam.losses import DamLossWeights, dam_loss_terms
from dam.network import RegistrationNet
from dam.warp import endpoint_error
from train.checkpoint import DamCheckpoint, save_checkpoint
from train.priors import PairProvider, collate, iterate_batches
from utils.errors import ConfigError, TrainingDivergedError
from utils.file_manager import append_jsonl, ensure_dir

logger = get_logger(__name__)

DAM_CHECKPOINT = "dam.ckpt"
DAM_LOG = "dam_log.jsonl"


def dam_weights(config: TrainConfig) -> DamLossWeights:
    return DamLossWeights(lambda_phi=config.loss_weights.lambda_phi, window=config.ncc_window)


def _check_finite(step: int, **terms: float) -> None:
    if not all(math.isfinite(v) for v in terms.values()):
        detail = ", ".join(f"{k}={v}" for k, v in terms.items())
        raise TrainingDivergedError(f"DAM loss is not finite at step {step}: {detail}")


def evaluate_dam(net: RegistrationNet, data: PairProvider, config: TrainConfig) -> dict[str, float]:
    """Mean loss terms (and endpoint error when every pair has a gt field) over all pairs"""
    weights = dam_weights(config)
    dtype = next(net.parameters()).dtype
    sums = {"sim": 0.0, "smooth": 0.0, "total": 0.0, "epe": 0.0}
    has_gt = True
    was_training = net.training
    net.eval()
    with torch.no_grad():
        for index in range(len(data)):
            batch = collate([data.get(index)], [index], dtype)
            field = net(batch.i_f, batch.i_g)
            terms = dam_loss_terms(batch.i_f, batch.i_g, field, weights)
            sums["sim"] += float(terms.sim)
            sums["smooth"] += float(terms.smooth)
            sums["total"] += float(terms.total)
            if batch.gt_field is None:
                has_gt = False
            else:
                sums["epe"] += float(endpoint_error(field, batch.gt_field))
    net.train(was_training)
    metrics = {k: v / len(data) for k, v in sums.items()}
    if not has_gt:
        metrics.pop("epe")
    return metrics


def train_stage1(config: TrainConfig, data: PairProvider, out_dir=None) -> DamCheckpoint:
    """Adam on the NCC + smoothness objective; logs {step, sim, smooth, total[, epe]}"""
    if config.stage != "dam":
        raise ConfigError(f"train_stage1 needs stage 'dam', got {config.stage!r}")
    out_path: Optional[Path] = ensure_dir(out_dir) if out_dir is not None else None
    log_path = out_path / DAM_LOG if out_path else None
    if log_path is not None and log_path.exists():
        log_path.unlink()

    torch.manual_seed(config.seed)
    net = RegistrationNet(config.dam)
    net.train()
    optimizer = torch.optim.Adam(
        net.parameters(), lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps
    )
    weights = dam_weights(config)
    batches = iterate_batches(data, config.batch_size, config.seed)
    history: list[dict[str, Any]] = []
    steps = config.total_iterations

    logger.info("Stage 1: %d iterations on %d pairs (batch %d)", steps, len(data), config.batch_size)
    for step in tqdm(range(steps), desc="train-dam", disable=steps == 0):
        batch = next(batches)
        field = net(batch.i_f, batch.i_g)
        terms = dam_loss_terms(batch.i_f, batch.i_g, field, weights)
        _check_finite(step, sim=terms.sim.detach().item(), smooth=terms.smooth.detach().item())

        optimizer.zero_grad()
        terms.total.backward()
        optimizer.step()

        if step % config.log_every == 0 or step == steps - 1:
            record = {
                "step": step,
                "sim": terms.sim.detach().item(),
                "smooth": terms.smooth.detach().item(),
                "total": terms.total.detach().item(),
            }
            if batch.gt_field is not None:
                record["epe"] = float(endpoint_error(field.detach(), batch.gt_field))
            history.append(record)
            if log_path is not None:
                append_jsonl(record, log_path)
            logger.debug("dam step %d: %s", step, record)

    net.eval()
    ckpt_path = None
    if out_path is not None:
        ckpt_path = save_checkpoint("dam", net, config, out_path / DAM_CHECKPOINT, {"history": history})
    return DamCheckpoint(net=net, config=config, history=history, path=ckpt_path)
