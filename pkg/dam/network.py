# Registration network
# Purpose: small U-Net over the concatenated (I_F, I_G) pair predicting a dense pixel-unit field

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from imagecore.image import DeformationField, Image, check_same_shape, field_from_tensor, to_tensor
from utils.errors import RangeError


class RegistrationNetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    levels: int = Field(3, ge=2, description="Encoder/decoder resolutions")
    base_channels: int = Field(16, ge=4)
    field_init_scale: float = Field(1e-2, ge=0, description="Multiplier on the field head's initial weights")
    in_channels: int = Field(3, description="Channels of each input image")


def _conv_block(in_ch: int, out_ch: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1),
        nn.LeakyReLU(0.2),
    )


class RegistrationNet(nn.Module):
    """U-Net R_theta: (I_F, I_G) -> phi"""

    def __init__(self, config: RegistrationNetConfig | None = None):
        super().__init__()
        self.config = config or RegistrationNetConfig()
        base = self.config.base_channels
        widths = [base * (2 ** i) for i in range(self.config.levels)]

        self.encoders = nn.ModuleList()
        in_ch = 2 * self.config.in_channels
        for i, width in enumerate(widths):
            self.encoders.append(nn.Sequential(
                _conv_block(in_ch, width, stride=1 if i == 0 else 2),
                _conv_block(width, width),
            ))
            in_ch = width

        self.decoders = nn.ModuleList()
        for i in range(self.config.levels - 2, -1, -1):
            self.decoders.append(nn.Sequential(
                _conv_block(widths[i + 1] + widths[i], widths[i]),
                _conv_block(widths[i], widths[i]),
            ))

        self.field_head = nn.Conv2d(widths[0], 2, 3, padding=1)
        with torch.no_grad():
            self.field_head.weight.mul_(self.config.field_init_scale)
            self.field_head.bias.zero_()

    def forward(self, i_f: torch.Tensor, i_g: torch.Tensor) -> torch.Tensor:
        x = torch.cat([i_f, i_g], dim=1)
        skips = []
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)

        x = skips.pop()
        for decoder in self.decoders:
            skip = skips.pop()
            x = F.interpolate(x, size=skip.shape[-2:], mode="nearest")
            x = decoder(torch.cat([x, skip], dim=1))
        return self.field_head(x)


def predict_field(net: RegistrationNet, i_f: Image, i_g: Image) -> DeformationField:
    """Dense field aligning I_G toward I_F; both images in signed range"""
    check_same_shape(i_f, i_g, "I_F and I_G")
    if i_f.value_range != "signed" or i_g.value_range != "signed":
        raise RangeError("predict_field expects signed-range images")
    dtype = next(net.parameters()).dtype
    with torch.no_grad():
        field = net(to_tensor(i_f, dtype), to_tensor(i_g, dtype))
    return field_from_tensor(field)
