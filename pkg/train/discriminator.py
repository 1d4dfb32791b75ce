# Adversarial critic for stage-2 training

import torch
import torch.nn as nn


class Discriminator(nn.Module):
    """Four stride-2 convs with leaky ReLU, global average pool, scalar logit per image"""

    def __init__(self, in_channels: int = 3, channels: int = 16):
        super().__init__()
        widths = [channels, 2 * channels, 4 * channels, 8 * channels]
        layers = []
        prev = in_channels
        for width in widths:
            layers += [nn.Conv2d(prev, width, 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
            prev = width
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(prev, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) -> (B,) logits"""
        z = self.features(x).mean(dim=(-2, -1))
        return self.head(z).squeeze(-1)
