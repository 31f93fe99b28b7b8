"""
Reusable neural primitives shared by the interaction modules and the decoder.

Provides a same-padding convolution block, a channel-max spatial attention
mask, a squeeze-and-excitation style channel attention vector, and their
channel-then-spatial cascade.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from cdinet.config import DEFAULT_REDUCTION_RATIO
from cdinet.exceptions import ConfigurationError

ALLOWED_KERNEL_SIZES = (1, 3, 7)


@dataclass(frozen=True)
class ConvBlockSpec:
    """Shape and options of a single convolution block."""

    in_channels: int
    out_channels: int
    kernel_size: int = 3
    use_activation: bool = True
    use_normalization: bool = False

    def __post_init__(self) -> None:
        if self.kernel_size not in ALLOWED_KERNEL_SIZES:
            raise ConfigurationError(
                f"kernel_size must be one of {ALLOWED_KERNEL_SIZES}, got {self.kernel_size}"
            )
        if self.in_channels <= 0 or self.out_channels <= 0:
            raise ConfigurationError(
                f"channel counts must be positive, got {self.in_channels}->{self.out_channels}"
            )

    @property
    def padding(self) -> int:
        """Same-padding for the odd kernel."""
        return (self.kernel_size - 1) // 2


class ConvBlock(nn.Module):
    """
    Convolution with bias, optional batch normalisation and optional ReLU.

    Spatial size is preserved for every allowed kernel size.
    """

    def __init__(self, spec: ConvBlockSpec) -> None:
        super().__init__()
        self.spec = spec
        self.conv = nn.Conv2d(
            spec.in_channels,
            spec.out_channels,
            kernel_size=spec.kernel_size,
            padding=spec.padding,
            bias=True,
        )
        self.norm = nn.BatchNorm2d(spec.out_channels) if spec.use_normalization else nn.Identity()
        self.act = nn.ReLU(inplace=False) if spec.use_activation else nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.spec.in_channels:
            raise ConfigurationError(
                f"ConvBlock expected {self.spec.in_channels} input channels, "
                f"got {x.shape[1] if x.dim() == 4 else tuple(x.shape)}"
            )
        out: torch.Tensor = self.act(self.norm(self.conv(x)))
        return out


def conv_block(
    in_channels: int,
    out_channels: int,
    kernel_size: int = 3,
    use_activation: bool = True,
    use_normalization: bool = False,
) -> ConvBlock:
    """Shorthand for ``ConvBlock(ConvBlockSpec(...))``."""
    return ConvBlock(
        ConvBlockSpec(in_channels, out_channels, kernel_size, use_activation, use_normalization)
    )


def channel_max_pool(x: torch.Tensor) -> torch.Tensor:
    """Max over the channel axis, keeping a single channel: (N,C,H,W) -> (N,1,H,W)."""
    return torch.amax(x, dim=1, keepdim=True)


class SpatialAttention(nn.Module):
    """
    Spatial attention mask ``sigmoid(convs(channel_max_pool(f)))``.

    The convolution stack maps one channel to one channel. ReLU separates
    consecutive convolutions when ``activation_between`` is set; the sigmoid
    is applied once at the end.

    Example:
        sa = SpatialAttention([7, 7])
        mask = sa(features)          # (N, 1, H, W) in (0, 1)
    """

    def __init__(self, kernel_sizes: Sequence[int], activation_between: bool = True) -> None:
        super().__init__()
        if not kernel_sizes:
            raise ConfigurationError("SpatialAttention needs at least one convolution kernel")
        last = len(kernel_sizes) - 1
        layers: List[nn.Module] = [
            conv_block(1, 1, k, use_activation=activation_between and i < last)
            for i, k in enumerate(kernel_sizes)
        ]
        self.convs = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.convs(channel_max_pool(x)))


def resolve_reduction_ratio(channels: int, reduction_ratio: int = DEFAULT_REDUCTION_RATIO) -> int:
    """
    Effective reduction ratio for a channel attention over ``channels``.

    Narrow features (fewer channels than the ratio) clamp the ratio to the
    channel count so the hidden layer keeps one unit.

    Raises:
        ConfigurationError: If the channel count is not divisible by the ratio.
    """
    ratio = channels if channels < reduction_ratio else reduction_ratio
    if channels % ratio:
        raise ConfigurationError(
            f"{channels} channels are not divisible by reduction ratio {ratio}"
        )
    return ratio


class ChannelAttention(nn.Module):
    """
    Channel weights ``sigmoid(FC(ReLU(FC(GAP(f)))))`` of shape (N, C, 1, 1).

    The first FC maps C -> C/r, the second C/r -> C.
    """

    def __init__(self, channels: int, reduction_ratio: int = DEFAULT_REDUCTION_RATIO) -> None:
        super().__init__()
        self.channels = channels
        self.reduction_ratio = resolve_reduction_ratio(channels, reduction_ratio)
        hidden = channels // self.reduction_ratio
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    @staticmethod
    def squeeze(x: torch.Tensor) -> torch.Tensor:
        """Global average pooling: (N,C,H,W) -> (N,C)."""
        return F.adaptive_avg_pool2d(x, 1).flatten(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ConfigurationError(
                f"ChannelAttention expected {self.channels} channels, got {x.shape[1]}"
            )
        weights = torch.sigmoid(self.fc2(F.relu(self.fc1(self.squeeze(x)))))
        return weights.view(x.shape[0], self.channels, 1, 1)


class CascadedAttention(nn.Module):
    """Channel attention followed by spatial attention, each applied multiplicatively."""

    def __init__(
        self,
        channels: int,
        reduction_ratio: int = DEFAULT_REDUCTION_RATIO,
        spatial_kernel_sizes: Sequence[int] = (3,),
    ) -> None:
        super().__init__()
        self.channel_attention = ChannelAttention(channels, reduction_ratio)
        self.spatial_attention = SpatialAttention(spatial_kernel_sizes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x * self.channel_attention(x)
        return x * self.spatial_attention(x)
