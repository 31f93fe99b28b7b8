"""
Dense decoding reconstruction.

Before a skip feature enters the decoder it is filtered by a semantic block
built from every higher-level skip feature, upsampled to its resolution::

    B_i       = conv3(conv1([up(f_{i+1}), ..., up(f_5)]))
    F_skip_i  = B_i * f_i + f_i

Level 5 has no higher levels and passes through unchanged. Decoding runs top
down: combine the running features with ``F_skip_i`` by concatenation, apply
two 3x3 conv blocks, upsample 2x, and finish with a 3x3 head to one channel
of logits at input resolution.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from cdinet.blocks import conv_block
from cdinet.config import NUM_STAGES
from cdinet.exceptions import ConfigurationError, ShapeError

# Bilinear, align_corners=False everywhere.
INTERPOLATION_MODE = "bilinear"


def resize_to(x: torch.Tensor, size: Sequence[int]) -> torch.Tensor:
    """Bilinearly resample a skip feature to ``size`` (H, W)."""
    return F.interpolate(x, size=tuple(size), mode=INTERPOLATION_MODE, align_corners=False)


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode=INTERPOLATION_MODE, align_corners=False)


def refine_skip(block: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
    """Residual semantic filtering ``B * f + f``."""
    if block.shape != skip.shape:
        raise ShapeError.mismatch("semantic block vs skip", block.shape, skip.shape)
    return block * skip + skip


def predict(logits: torch.Tensor) -> torch.Tensor:
    """Turn single-channel logits into a saliency map in (0, 1)."""
    if logits.dim() != 4 or logits.shape[1] != 1:
        raise ShapeError(f"predict expects (N, 1, H, W) logits, got {tuple(logits.shape)}")
    return torch.sigmoid(logits)


class SemanticBlock(nn.Module):
    """1x1 reduction of the concatenated higher-level skips, then a 3x3 conv."""

    def __init__(self, in_channels: int, out_channels: int) -> None:
        super().__init__()
        self.reduce = conv_block(in_channels, out_channels, 1)
        self.fuse = conv_block(out_channels, out_channels, 3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out: torch.Tensor = self.fuse(self.reduce(x))
        return out


class DenseDecoder(nn.Module):
    """
    Top-down decoder over five skip features.

    Args:
        stage_channels: Channel count of each skip level (encoder widths).
        dense: Build semantic blocks; ``False`` gives plain corresponding-layer
            skip connections.
    """

    def __init__(self, stage_channels: Sequence[int], dense: bool = True) -> None:
        super().__init__()
        if len(stage_channels) != NUM_STAGES:
            raise ConfigurationError(
                f"DenseDecoder needs {NUM_STAGES} skip widths, got {len(stage_channels)}"
            )
        self.stage_channels = tuple(stage_channels)
        self.dense = dense
        c = self.stage_channels

        self.semantic_blocks: Optional[nn.ModuleList] = None
        if dense:
            self.semantic_blocks = nn.ModuleList(
                [SemanticBlock(sum(c[level:]), c[level - 1]) for level in range(1, NUM_STAGES)]
            )

        levels = []
        for level in range(1, NUM_STAGES + 1):
            in_channels = c[level - 1] if level == NUM_STAGES else c[level] + c[level - 1]
            levels.append(
                nn.Sequential(
                    conv_block(in_channels, c[level - 1], 3),
                    conv_block(c[level - 1], c[level - 1], 3),
                )
            )
        self.levels = nn.ModuleList(levels)
        self.head = conv_block(c[0], 1, 3, use_activation=False)

    def _check_skips(self, skips: Sequence[torch.Tensor]) -> None:
        if len(skips) != NUM_STAGES:
            raise ShapeError(f"Decoder needs {NUM_STAGES} skip features, got {len(skips)}")
        for level, (skip, width) in enumerate(zip(skips, self.stage_channels), start=1):
            if skip.dim() != 4 or skip.shape[1] != width:
                raise ShapeError(
                    f"skip level {level} should have {width} channels, got {tuple(skip.shape)}"
                )

    def semantic_block(self, skips: Sequence[torch.Tensor], level: int) -> torch.Tensor:
        """
        Semantic block ``B`` for ``level`` from all higher-level skips.

        Raises:
            ConfigurationError: For level 5 (no higher levels) or a decoder
                built without dense connections.
        """
        if self.semantic_blocks is None:
            raise ConfigurationError("decoder was built without semantic blocks")
        if not 1 <= level < NUM_STAGES:
            raise ConfigurationError(
                f"semantic blocks exist for levels 1..{NUM_STAGES - 1}, got {level}"
            )
        size = skips[level - 1].shape[-2:]
        higher = [resize_to(skip, size) for skip in skips[level:]]
        out: torch.Tensor = self.semantic_blocks[level - 1](torch.cat(higher, dim=1))
        return out

    def refined_skips(self, skips: Sequence[torch.Tensor]) -> List[torch.Tensor]:
        """``F_skip`` for every level; level 5 (and every level when not dense) is the identity."""
        self._check_skips(skips)
        if not self.dense:
            return list(skips)
        refined = [
            refine_skip(self.semantic_block(skips, level), skips[level - 1])
            for level in range(1, NUM_STAGES)
        ]
        refined.append(skips[-1])
        return refined

    def forward(self, skips: Sequence[torch.Tensor]) -> torch.Tensor:
        refined = self.refined_skips(skips)
        x = self.levels[-1](refined[-1])
        for level in range(NUM_STAGES - 1, 0, -1):
            x = upsample2x(x)
            x = self.levels[level - 1](torch.cat([x, refined[level - 1]], dim=1))
        logits: torch.Tensor = self.head(x)
        return logits
