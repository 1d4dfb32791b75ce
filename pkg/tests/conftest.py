import numpy as np
import pytest
import torch

from config.train_config import TrainConfig
from imagecore.image import RANGE_BOUNDS, Image
from train.priors import SyntheticPairProvider, procedural_face

TINY_OVERRIDES = {
    "image_size": 32,
    "batch_size": 2,
    "log_every": 1,
    "ncc_window": 5,
    "disc_channels": 4,
    "dam": {"levels": 2, "base_channels": 4},
    "tgrn": {"levels": 2, "channels_per_level": [8, 16], "mlp_hidden": 8, "tam_residual_blocks": 1},
    "feature_embedder": {"seed": 1, "output_dim": 16},
    "identity_embedder": {"seed": 2, "output_dim": 16},
}

TINY_CLI_SETS = [
    "dam.levels=2",
    "dam.base_channels=4",
    "tgrn.levels=2",
    "tgrn.channels_per_level=[8, 16]",
    "tgrn.mlp_hidden=8",
    "tgrn.tam_residual_blocks=1",
    "ncc_window=5",
    "disc_channels=4",
    "batch_size=2",
    "feature_embedder.output_dim=16",
    "identity_embedder.output_dim=16",
]


def tiny_config(stage: str = "dam", iterations: int = 3, **overrides) -> TrainConfig:
    """Small networks and few steps so training tests run in seconds"""
    data = {**TINY_OVERRIDES, "stage": stage, "iterations": iterations}
    data.update(overrides)
    return TrainConfig.model_validate(data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_image(rng):
    def make(height: int = 16, width: int = 16, channels: int = 3, value_range: str = "unit") -> Image:
        low, high = RANGE_BOUNDS[value_range]
        return Image(rng.uniform(low, high, size=(height, width, channels)), value_range)

    return make


@pytest.fixture
def face():
    return procedural_face(32, seed=0)


@pytest.fixture
def tiny_pairs():
    return SyntheticPairProvider.procedural(4, 32, seed=0, warp_magnitude=2.0, texture_strength=0.05)


@pytest.fixture
def double_precision():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)
