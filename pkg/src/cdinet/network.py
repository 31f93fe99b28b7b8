"""
Network assembly: two encoder streams, cross-modality interaction modules,
and the dense decoder, plus the named experiment variants and checkpoints.

Guidance direction by interaction mode (``rgb->depth`` means the RGB stream
guides and the depth stream is enhanced):

============== ====================== ======================
mode           low stages             high stages
============== ====================== ======================
discrepant     rgb->depth             depth->rgb
unidirectional depth->rgb             depth->rgb
bidirectional  rgb->depth, depth->rgb rgb->depth, depth->rgb
============== ====================== ======================

``low_module`` / ``high_module`` choose which module structure (RDE or DSE)
realises the guidance of each stage group.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import torch
import torch.nn as nn

from cdinet.backbone import VGGEncoder, load_pretrained
from cdinet.config import (
    INPUT_CHANNELS,
    NUM_STAGES,
    RESOLUTION_MULTIPLE,
    BackboneConfig,
    InteractionMode,
    NetworkConfig,
)
from cdinet.decoder import DenseDecoder, predict
from cdinet.dse import DSE
from cdinet.exceptions import DataError, ShapeError
from cdinet.rde import RDE

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

RGB_TO_DEPTH = "rgb_to_depth"
DEPTH_TO_RGB = "depth_to_rgb"

Features = List[torch.Tensor]


@dataclass
class EncodedFeatures:
    """Per-stage stream outputs (after interaction) and the decoder skip list."""

    rgb: Features
    depth: Features
    skips: Features


class CDINet(nn.Module):
    """
    Cross-modality discrepant interaction network.

    Example:
        net = build_network(NetworkConfig(backbone=BackboneConfig.toy()))
        saliency = net(rgb, depth)       # (N, 1, H, W) in (0, 1)
    """

    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        config.validate()
        self.config = config
        self.stage_channels = tuple(config.backbone.stage_channels)

        self.rgb_encoder = VGGEncoder(config.backbone, stream="rgb")
        self.depth_encoder = VGGEncoder(config.backbone, stream="depth")
        self.interactions = nn.ModuleDict()
        for stage in range(1, NUM_STAGES + 1):
            for direction in self.stage_directions(stage):
                self.interactions[f"stage{stage}_{direction}"] = self._make_module(stage)
        self.decoder = DenseDecoder(self.stage_channels, dense=not config.without_ddr)

    def stage_directions(self, stage: int) -> Tuple[str, ...]:
        """Guidance directions active at ``stage`` for this configuration."""
        config = self.config
        low = stage in config.low_stages
        if (low and config.without_rde) or (not low and config.without_dse):
            return ()
        mode = config.interaction_mode
        if mode is InteractionMode.BIDIRECTIONAL:
            return (RGB_TO_DEPTH, DEPTH_TO_RGB)
        if mode is InteractionMode.UNIDIRECTIONAL:
            return (DEPTH_TO_RGB,)
        return (RGB_TO_DEPTH,) if low else (DEPTH_TO_RGB,)

    def _make_module(self, stage: int) -> nn.Module:
        config = self.config
        channels = self.stage_channels[stage - 1]
        kind = config.low_module if stage in config.low_stages else config.high_module
        if kind == "rde":
            return RDE(channels, mask_activation=config.rde_mask_activation)
        return DSE(channels, config.reduction_ratio, alt_addition=config.dse_alt_addition)

    def _interact(
        self, stage: int, rgb: torch.Tensor, depth: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        # Both directions read the pre-interaction features of the stage.
        new_rgb, new_depth = rgb, depth
        for direction in self.stage_directions(stage):
            module = self.interactions[f"stage{stage}_{direction}"]
            if direction == RGB_TO_DEPTH:
                new_depth = module(rgb, depth)
            else:
                new_rgb = module(depth, rgb)
        return new_rgb, new_depth

    def _skip_for_stage(self, stage: int, rgb: torch.Tensor, depth: torch.Tensor) -> torch.Tensor:
        directions = self.stage_directions(stage)
        low = stage in self.config.low_stages
        if len(directions) == 2:
            return depth if low else rgb
        if directions == (RGB_TO_DEPTH,):
            return depth
        return rgb

    def encode(self, rgb: torch.Tensor, depth: torch.Tensor) -> EncodedFeatures:
        """Run both encoders with cross-modality interaction and collect skips."""
        self._check_inputs(rgb, depth)
        rgb_features: Features = []
        depth_features: Features = []
        skips: Features = []
        r, d = rgb, depth
        for stage in range(1, NUM_STAGES + 1):
            r = self.rgb_encoder.encode_stage(r, stage)
            d = self.depth_encoder.encode_stage(d, stage)
            r, d = self._interact(stage, r, d)
            rgb_features.append(r)
            depth_features.append(d)
            skips.append(self._skip_for_stage(stage, r, d))
        if self.config.without_dse and self.config.top_fusion:
            skips[-1] = rgb_features[-1] + depth_features[-1]
        return EncodedFeatures(rgb=rgb_features, depth=depth_features, skips=skips)

    def logits(self, rgb: torch.Tensor, depth: torch.Tensor) -> torch.Tensor:
        """Single-channel decoder logits at input resolution."""
        out: torch.Tensor = self.decoder(self.encode(rgb, depth).skips)
        return out

    def forward(self, rgb: torch.Tensor, depth: torch.Tensor) -> torch.Tensor:
        return predict(self.logits(rgb, depth))

    @staticmethod
    def _check_inputs(rgb: torch.Tensor, depth: torch.Tensor) -> None:
        if rgb.shape != depth.shape:
            raise ShapeError.mismatch("RGB vs depth input", rgb.shape, depth.shape)
        if rgb.dim() != 4 or rgb.shape[1] != INPUT_CHANNELS:
            raise ShapeError(f"inputs must be (N, 3, H, W), got {tuple(rgb.shape)}")
        height, width = rgb.shape[-2:]
        if height % RESOLUTION_MULTIPLE or width % RESOLUTION_MULTIPLE:
            raise ShapeError(
                f"input resolution {height}x{width} is not divisible by {RESOLUTION_MULTIPLE}"
            )

    def load_backbone_weights(self) -> int:
        """Initialise both encoder streams from the configured pretrained archive."""
        state = load_pretrained(self.config.backbone)
        if not state:
            return 0
        return self.rgb_encoder.load_pretrained_state(state) + self.depth_encoder.load_pretrained_state(
            state
        )


def count_parameters(net: nn.Module) -> int:
    """Exact number of trainable scalars."""
    return sum(p.numel() for p in net.parameters() if p.requires_grad)


def build_network(config: NetworkConfig, load_pretrained_weights: bool = True) -> CDINet:
    """
    Build a network honouring every variant flag in ``config``.

    Raises:
        ConfigurationError: If the flags are inconsistent.
        PretrainedWeightsError: If a configured backbone archive cannot be used.
    """
    net = CDINet(config)
    if load_pretrained_weights and config.backbone.pretrained_weights_path:
        loaded = net.load_backbone_weights()
        logger.info(f"Initialised {loaded} encoder conv layers from pretrained weights")
    logger.info(
        f"Built CDINet ({config.interaction_mode.value}, "
        f"scale={config.backbone.scale.value}) with {count_parameters(net):,} parameters"
    )
    logger.debug(f"Interaction modules: {list(net.interactions.keys())}")
    return net


# Named experiment variants: ablations, interaction modes and module substitutions.
VARIANTS: Dict[str, Callable[[NetworkConfig], NetworkConfig]] = {
    "cdinet": lambda c: c,
    "unidirectional": lambda c: replace(c, interaction_mode=InteractionMode.UNIDIRECTIONAL),
    "bidirectional": lambda c: replace(c, interaction_mode=InteractionMode.BIDIRECTIONAL),
    "wo_rde": lambda c: replace(c, without_rde=True),
    "wo_dse": lambda c: replace(c, without_dse=True),
    "wo_ddr": lambda c: replace(c, without_ddr=True),
    "dse_for_rde": lambda c: replace(c, low_module="dse"),
    "rde_for_dse": lambda c: replace(c, high_module="rde"),
    "exchanged": lambda c: replace(c, low_module="dse", high_module="rde"),
    "rde_first_three": lambda c: replace(c, low_stages=(1, 2, 3), high_stages=(4, 5)),
}


def variant_config(name: str, backbone: Optional[BackboneConfig] = None) -> NetworkConfig:
    """
    Configuration of a named variant on top of the default network.

    Raises:
        KeyError: For an unknown variant name.
    """
    if name not in VARIANTS:
        raise KeyError(f"Unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    base = NetworkConfig(backbone=backbone or BackboneConfig())
    return VARIANTS[name](base)


@dataclass
class Checkpoint:
    """Network parameters, optimiser state and the config that produced them."""

    model_state: Dict[str, torch.Tensor]
    network_config: Dict[str, Any]
    epoch: int = 0
    optimizer_state: Optional[Dict[str, Any]] = None
    train_config: Dict[str, Any] = field(default_factory=dict)
    loss_history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "epoch": self.epoch,
            "network_config": self.network_config,
            "train_config": self.train_config,
            "loss_history": list(self.loss_history),
            "model_state": self.model_state,
            "optimizer_state": self.optimizer_state,
        }

    def to_bytes(self) -> bytes:
        """Serialise through an in-memory buffer so the archive is path-independent."""
        buffer = io.BytesIO()
        torch.save(self.to_dict(), buffer)
        return buffer.getvalue()

    def save(self, path: str) -> str:
        """Write the checkpoint to ``path``."""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: str) -> Checkpoint:
        """
        Read a checkpoint written by :meth:`save`.

        Raises:
            DataError: If the file is missing, unreadable or not a checkpoint.
        """
        if not Path(path).is_file():
            raise DataError(f"Checkpoint not found: {path}")
        try:
            data = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as e:
            raise DataError(f"Cannot read checkpoint {path}: {e}") from e
        if not isinstance(data, dict) or "model_state" not in data:
            raise DataError(f"{path} is not a checkpoint")
        return cls(
            model_state=data["model_state"],
            network_config=data["network_config"],
            epoch=int(data["epoch"]),
            optimizer_state=data.get("optimizer_state"),
            train_config=data.get("train_config", {}),
            loss_history=list(data.get("loss_history", [])),
        )

    @classmethod
    def from_network(cls, net: CDINet, **kwargs: Any) -> Checkpoint:
        """Snapshot a network's parameters and config."""
        state = {k: v.detach().clone() for k, v in net.state_dict().items()}
        return cls(model_state=state, network_config=net.config.to_dict(), **kwargs)

    def build_network(self) -> CDINet:
        """Rebuild the network from the stored config and load its parameters."""
        net = CDINet(NetworkConfig.from_dict(self.network_config))
        net.load_state_dict(self.model_state)
        return net
