"""
Depth-induced semantic enhancement (high-level encoder stages).

Two kinds of guidance flow from the ``guide`` stream (depth by default) into
the ``target`` stream (RGB by default):

- attention level: a spatial gate computed from the guide multiplies the
  target, then a channel attention over the gated target reweights it
  (``D_att``);
- feature level: the guide itself is refined by cascaded channel and
  spatial attention (``D_add``).

The enhanced target is ``D_att + D_add``.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn

from cdinet.blocks import CascadedAttention, ChannelAttention, SpatialAttention
from cdinet.config import DEFAULT_REDUCTION_RATIO
from cdinet.exceptions import ShapeError

DSE_SPATIAL_KERNELS = (3,)


class DSE(nn.Module):
    """Semantic enhancement of ``target`` features under guidance from ``guide`` features."""

    def __init__(
        self,
        channels: int,
        reduction_ratio: int = DEFAULT_REDUCTION_RATIO,
        spatial_kernel_sizes: Sequence[int] = DSE_SPATIAL_KERNELS,
        alt_addition: bool = False,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.alt_addition = alt_addition
        self.spatial_gate = SpatialAttention(spatial_kernel_sizes)
        self.channel_attention = ChannelAttention(channels, reduction_ratio)
        self.guide_enhance = CascadedAttention(channels, reduction_ratio, spatial_kernel_sizes)

    def depth_spatial_gate(self, target: torch.Tensor, guide: torch.Tensor) -> torch.Tensor:
        """Gate the target with a one-channel mask learned from the guide."""
        if target.shape != guide.shape:
            raise ShapeError.mismatch("DSE inputs", target.shape, guide.shape)
        return self.spatial_gate(guide) * target

    def attention_level_enhance(self, gated: torch.Tensor) -> torch.Tensor:
        """Channel-reweight the spatially gated target (``D_att``)."""
        return self.channel_attention(gated) * gated

    def feature_level_enhance(self, guide: torch.Tensor) -> torch.Tensor:
        """Refine the guide with cascaded channel and spatial attention (``D_add``)."""
        out: torch.Tensor = self.guide_enhance(guide)
        return out

    def forward(self, guide: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        d_att = self.attention_level_enhance(self.depth_spatial_gate(target, guide))
        d_add = self.feature_level_enhance(guide)
        if self.alt_addition:
            d_add = d_add + target
        return d_att + d_add
