"""
VGG16-style five-stage encoder used for both the RGB and the depth stream.

Each stream owns its own parameters. Stages 2..5 start with a stride-2 max
pool, and the pool that would follow stage 5 is dropped, so stage ``i``
runs at ``1 / 2**(i-1)`` of the input resolution.
"""

from __future__ import annotations

import logging
import os
from typing import Dict, List

import torch
import torch.nn as nn

from cdinet.blocks import conv_block
from cdinet.config import (
    INPUT_CHANNELS,
    NUM_STAGES,
    VGG16_STAGE_DEPTHS,
    BackboneConfig,
    BackboneScale,
)
from cdinet.exceptions import ConfigurationError, PretrainedWeightsError

logger = logging.getLogger(__name__)

# Indices of the 13 conv layers inside torchvision's ``vgg16().features``.
TORCHVISION_VGG16_CONV_INDICES = (0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28)


def vgg16_layer_names() -> List[str]:
    """Canonical archive layer names: conv1_1 .. conv5_3."""
    return [
        f"conv{stage}_{layer}"
        for stage, depth in enumerate(VGG16_STAGE_DEPTHS, start=1)
        for layer in range(1, depth + 1)
    ]


class EncoderStage(nn.Module):
    """Optional 2x max pool followed by a run of 3x3 conv + ReLU blocks."""

    def __init__(self, in_channels: int, out_channels: int, depth: int, pool: bool) -> None:
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.pool = nn.MaxPool2d(kernel_size=2, stride=2) if pool else nn.Identity()
        self.convs = nn.Sequential(
            *[
                conv_block(in_channels if i == 0 else out_channels, out_channels, 3)
                for i in range(depth)
            ]
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out: torch.Tensor = self.convs(self.pool(x))
        return out


class VGGEncoder(nn.Module):
    """
    One encoder stream (RGB or depth).

    Example:
        encoder = VGGEncoder(BackboneConfig.toy(), stream="rgb")
        f1 = encoder.encode_stage(image, 1)
        f2 = encoder.encode_stage(f1, 2)
    """

    def __init__(self, config: BackboneConfig, stream: str = "rgb") -> None:
        super().__init__()
        config.validate()
        self.config = config
        self.stream = stream
        channels = (INPUT_CHANNELS,) + tuple(config.stage_channels)
        self.stages = nn.ModuleList(
            [
                EncoderStage(channels[i], channels[i + 1], VGG16_STAGE_DEPTHS[i], pool=i > 0)
                for i in range(NUM_STAGES)
            ]
        )

    def encode_stage(self, x: torch.Tensor, stage_index: int) -> torch.Tensor:
        """
        Run a single encoder stage.

        Args:
            x: Output of the previous stage (after any cross-modality
                injection), or the 3-channel input for stage 1.
            stage_index: Stage number in 1..5.

        Raises:
            ConfigurationError: On an invalid stage index or channel mismatch.
        """
        if not 1 <= stage_index <= NUM_STAGES:
            raise ConfigurationError(f"stage_index must be in 1..{NUM_STAGES}, got {stage_index}")
        stage = self.stages[stage_index - 1]
        if x.dim() != 4 or x.shape[1] != stage.in_channels:
            raise ConfigurationError(
                f"{self.stream} stage {stage_index} expects {stage.in_channels} channels, "
                f"got {x.shape[1] if x.dim() == 4 else tuple(x.shape)}"
            )
        out: torch.Tensor = stage(x)
        return out

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        features = []
        for stage_index in range(1, NUM_STAGES + 1):
            x = self.encode_stage(x, stage_index)
            features.append(x)
        return features

    def conv_layers(self) -> Dict[str, nn.Conv2d]:
        """Map canonical layer names (conv1_1 ...) to this stream's conv modules."""
        convs = [block.conv for stage in self.stages for block in stage.convs]
        return dict(zip(vgg16_layer_names(), convs))

    def load_pretrained_state(self, state: Dict[str, torch.Tensor]) -> int:
        """
        Copy canonical ``<layer>.weight`` / ``<layer>.bias`` tensors into the stream.

        Returns:
            Number of conv layers populated.
        """
        loaded = 0
        with torch.no_grad():
            for name, conv in self.conv_layers().items():
                weight, bias = state.get(f"{name}.weight"), state.get(f"{name}.bias")
                if weight is None or bias is None:
                    continue
                if weight.shape != conv.weight.shape or bias.shape != conv.bias.shape:
                    raise PretrainedWeightsError(
                        f"{name}: archive shape {tuple(weight.shape)} does not match "
                        f"layer shape {tuple(conv.weight.shape)}"
                    )
                conv.weight.copy_(weight)
                conv.bias.copy_(bias)
                loaded += 1
        return loaded


def _canonicalise(raw: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    """Accept either canonical names or torchvision ``features.N.*`` keys."""
    state: Dict[str, torch.Tensor] = {}
    for name, index in zip(vgg16_layer_names(), TORCHVISION_VGG16_CONV_INDICES):
        for suffix in ("weight", "bias"):
            canonical, legacy = f"{name}.{suffix}", f"features.{index}.{suffix}"
            if canonical in raw:
                state[canonical] = raw[canonical]
            elif legacy in raw:
                state[canonical] = raw[legacy]
            else:
                raise PretrainedWeightsError(f"Archive is missing {canonical} (or {legacy})")
    return state


def load_pretrained(config: BackboneConfig) -> Dict[str, torch.Tensor]:
    """
    Read ImageNet-pretrained VGG16 conv weights for the encoder.

    The archive is a ``torch.save`` dictionary keyed ``conv{s}_{l}.weight`` /
    ``conv{s}_{l}.bias``; a torchvision ``vgg16`` state dict is accepted too.

    Args:
        config: Backbone configuration carrying the archive path.

    Returns:
        Canonical state for all 13 conv layers, or an empty dict when no path
        is configured (the encoder then keeps its default initialisation).

    Raises:
        ConfigurationError: If a path is given for a toy-scale backbone.
        PretrainedWeightsError: If the file is missing, corrupt or incomplete.
    """
    path = config.pretrained_weights_path
    if not path:
        return {}
    if config.scale is not BackboneScale.FULL:
        raise ConfigurationError("pretrained weights require full scale")
    if not os.path.isfile(path):
        raise PretrainedWeightsError(f"Pretrained weights not found: {path}")
    try:
        raw = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise PretrainedWeightsError(f"Cannot read pretrained weights {path}: {e}") from e
    if not isinstance(raw, dict):
        raise PretrainedWeightsError(f"{path} does not contain a state dictionary")

    state = _canonicalise(raw)
    logger.info(f"Loaded {len(state) // 2} pretrained conv layers from {path}")
    return state
