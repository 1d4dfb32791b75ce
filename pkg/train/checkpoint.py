# Versioned checkpoint container
# Purpose: one torch-serialized dict shared by the DAM and TGRN stages

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import torch
import torch.nn as nn
from pydantic import ValidationError

from config.settings import get_logger
from config.train_config import TrainConfig
from dam.network import RegistrationNet
from tgrn.network import TGRN
from utils.errors import CheckpointError, ImageNotFoundError

logger = get_logger(__name__)

CHECKPOINT_FORMAT = "facefuse-checkpoint"
CHECKPOINT_VERSION = 1

Kind = Literal["dam", "tgrn"]


@dataclass
class DamCheckpoint:
    net: RegistrationNet
    config: TrainConfig
    history: list[dict[str, Any]] = field(default_factory=list)
    path: Optional[Path] = None


@dataclass
class TgrnCheckpoint:
    net: TGRN
    config: TrainConfig
    history: list[dict[str, Any]] = field(default_factory=list)
    path: Optional[Path] = None
    dam_checksum: Optional[str] = None


def parameter_checksum(module: nn.Module) -> str:
    """sha256 over every state_dict tensor, in name order"""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def save_checkpoint(kind: Kind, module: nn.Module, config: TrainConfig, path, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"Checkpoint directory does not exist: {path.parent}")
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config.model_dump(mode="json"),
        "state_dict": {k: v.detach().cpu() for k, v in module.state_dict().items()},
        "extra": extra or {},
    }
    torch.save(payload, path)
    logger.info("Saved %s checkpoint to %s", kind, path)
    return path


def load_checkpoint(path, kind: Kind) -> dict[str, Any]:
    """Read and validate a container of the expected kind"""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Unreadable checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Not a facefuse checkpoint: {path}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {payload.get('version')}: {path}")
    if payload.get("kind") != kind:
        raise CheckpointError(f"Expected a {kind} checkpoint, got {payload.get('kind')!r}: {path}")
    return payload


def _restore(module: nn.Module, payload: dict[str, Any], path: Path) -> None:
    try:
        module.load_state_dict(payload["state_dict"])
    except (RuntimeError, KeyError) as e:
        raise CheckpointError(f"State dict does not match the configured network in {path}: {e}") from e


def _config(payload: dict[str, Any], path: Path) -> TrainConfig:
    try:
        return TrainConfig.model_validate(payload["config"])
    except ValidationError as e:
        raise CheckpointError(f"Invalid config stored in {path}: {e}") from e


def load_dam(path) -> DamCheckpoint:
    path = Path(path)
    payload = load_checkpoint(path, "dam")
    config = _config(payload, path)
    net = RegistrationNet(config.dam)
    _restore(net, payload, path)
    net.eval()
    return DamCheckpoint(net=net, config=config, history=payload["extra"].get("history", []), path=path)


def load_tgrn(path) -> TgrnCheckpoint:
    path = Path(path)
    payload = load_checkpoint(path, "tgrn")
    config = _config(payload, path)
    net = TGRN(config.tgrn)
    _restore(net, payload, path)
    net.eval()
    extra = payload["extra"]
    return TgrnCheckpoint(
        net=net,
        config=config,
        history=extra.get("history", []),
        path=path,
        dam_checksum=extra.get("dam_checksum"),
    )
