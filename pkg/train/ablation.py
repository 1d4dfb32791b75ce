# Ablation ladder
# Purpose: A (warp only), B (no triplet), C (ground-truth positive, warp negative), D (full)
# trained on one synthetic benchmark and scored against its ground truth

from typing import Any, Optional, Sequence

import torch

from config.ablations import ABLATION_VARIANTS
from config.settings import get_logger
from config.train_config import TrainConfig
from dam.warp import endpoint_error, warp
from evalkit.metrics import psnr
from imagecore.image import convert_range, from_tensor
from train.checkpoint import DamCheckpoint
from train.losses import l1_loss
from train.priors import PairProvider, collate
from train.stage1 import train_stage1
from train.stage2 import train_stage2
from utils.errors import ConfigError
from utils.file_manager import ensure_dir, write_json

logger = get_logger(__name__)


def score_outputs(dam_ckpt: DamCheckpoint, data: PairProvider, tgrn=None) -> dict[str, float]:
    """Mean L1 and PSNR of the output against I_HQ, and the DAM endpoint error before/after alignment"""
    totals = {"l1": 0.0, "psnr": 0.0, "epe": 0.0, "epe_unaligned": 0.0}
    has_gt = True
    dam = dam_ckpt.net.eval()
    with torch.no_grad():
        for index in range(len(data)):
            batch = collate([data.get(index)], [index])
            field = dam(batch.i_f, batch.i_g)
            out = warp(batch.i_g, field)
            if tgrn is not None:
                out = tgrn(batch.i_f, out)
            out = out.clamp(-1.0, 1.0)
            totals["l1"] += float(l1_loss(batch.i_hq, out))
            ref = convert_range(from_tensor(batch.i_hq, "signed"), "unit")
            totals["psnr"] += psnr(ref, convert_range(from_tensor(out, "signed"), "unit"))
            if batch.gt_field is None:
                has_gt = False
            else:
                totals["epe"] += float(endpoint_error(field, batch.gt_field))
                totals["epe_unaligned"] += float(endpoint_error(torch.zeros_like(field), batch.gt_field))
    scores = {k: v / len(data) for k, v in totals.items()}
    if not has_gt:
        scores.pop("epe")
        scores.pop("epe_unaligned")
    return scores


def stage_config(config: TrainConfig, stage: str, iterations: Optional[int]) -> TrainConfig:
    """Same hyperparameters for another stage; None iterations take that stage's default"""
    return TrainConfig.model_validate({**config.model_dump(), "stage": stage, "iterations": iterations})


def run_ablation(
    config: TrainConfig,
    data: PairProvider,
    variants: Sequence[str] = ("A", "B", "C", "D"),
    out_dir=None,
    dam_ckpt: Optional[DamCheckpoint] = None,
    dam_iterations: Optional[int] = None,
    tgrn_iterations: Optional[int] = None,
) -> dict[str, dict[str, Any]]:
    """Train one DAM, then one TGRN per TGRN-backed variant; returns scores per variant"""
    unknown = [v for v in variants if v not in ABLATION_VARIANTS]
    if unknown:
        raise ConfigError(f"Unknown ablation variants: {unknown}")
    root = ensure_dir(out_dir) if out_dir is not None else None

    if dam_ckpt is None:
        dam_config = stage_config(config, "dam", dam_iterations)
        dam_ckpt = train_stage1(dam_config, data, root / "dam" if root else None)

    results: dict[str, dict[str, Any]] = {}
    for variant in variants:
        if not ABLATION_VARIANTS[variant]["uses_tgrn"]:
            results[variant] = score_outputs(dam_ckpt, data)
        else:
            tgrn_config = stage_config(config, "tgrn", tgrn_iterations).with_variant(variant)
            tgrn_ckpt = train_stage2(tgrn_config, dam_ckpt, data, root / variant if root else None)
            results[variant] = score_outputs(dam_ckpt, data, tgrn_ckpt.net)
        logger.info("Ablation %s: %s", variant, results[variant])

    if root is not None:
        write_json(results, root / "ablation.json")
    return results
