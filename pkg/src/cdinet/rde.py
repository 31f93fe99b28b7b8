"""
RGB-induced detail enhancement (low-level encoder stages).

A fused feature pool built from both modalities is gated by a spatial mask
derived from the enhanced modality alone, then added back residually::

    pool = conv3(conv1([guide, target]))
    out  = sigmoid(conv7(conv7(channel_max(target)))) * pool + target

In the default wiring ``guide`` is the RGB feature and ``target`` the depth
feature; the unidirectional and bidirectional variants reuse the module with
the roles swapped.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn

from cdinet.blocks import SpatialAttention, conv_block
from cdinet.exceptions import ShapeError

RDE_MASK_KERNELS = (7, 7)


class RDE(nn.Module):
    """Detail enhancement of ``target`` features under guidance from ``guide`` features."""

    def __init__(
        self,
        channels: int,
        mask_kernel_sizes: Sequence[int] = RDE_MASK_KERNELS,
        mask_activation: bool = True,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.fuse = nn.Sequential(
            conv_block(2 * channels, channels, 1),
            conv_block(channels, channels, 3),
        )
        self.mask = SpatialAttention(mask_kernel_sizes, activation_between=mask_activation)

    def _check(self, guide: torch.Tensor, target: torch.Tensor) -> None:
        if guide.shape != target.shape:
            raise ShapeError.mismatch("RDE inputs", guide.shape, target.shape)

    def fuse_pool(self, guide: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        """Fusion feature pool from the channel concatenation of both modalities."""
        self._check(guide, target)
        out: torch.Tensor = self.fuse(torch.cat([guide, target], dim=1))
        return out

    def forward(self, guide: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        pool = self.fuse_pool(guide, target)
        return self.mask(target) * pool + target
