"""
Configuration management for CDINet.

This module provides the configuration dataclasses for the backbone, the
assembled network and the training recipe, plus the flat key/value
experiment file that mirrors them. Every configuration can be built from a
dictionary, a JSON file or ``CDINET_*`` environment variables.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from cdinet.exceptions import ConfigurationError

# Backbone layout
NUM_STAGES = 5
VGG16_STAGE_CHANNELS: Tuple[int, ...] = (64, 128, 256, 512, 512)
VGG16_STAGE_DEPTHS: Tuple[int, ...] = (2, 2, 3, 3, 3)
TOY_STAGE_CHANNELS: Tuple[int, ...] = (8, 16, 32, 64, 64)
INPUT_CHANNELS = 3
RESOLUTION_MULTIPLE = 2 ** (NUM_STAGES - 1)

# Interaction defaults
DEFAULT_LOW_STAGES: Tuple[int, ...] = (1, 2)
DEFAULT_HIGH_STAGES: Tuple[int, ...] = (3, 4, 5)
DEFAULT_REDUCTION_RATIO = 16
GUIDANCE_MODULES = ("rde", "dse")

# Training recipe
DEFAULT_BATCH_SIZE = 4
DEFAULT_BASE_LR = 1e-4
DEFAULT_LR_DECAY_FACTOR = 5.0
DEFAULT_LR_DECAY_PERIOD = 40
DEFAULT_TOTAL_EPOCHS = 100
DEFAULT_TARGET_SIZE = 256
DEFAULT_CHECKPOINT_EVERY = 10

ENV_PREFIX = "CDINET_"


class BackboneScale(str, Enum):
    """Width of the two VGG16-style encoders."""

    FULL = "full"
    TOY = "toy"


class InteractionMode(str, Enum):
    """Direction pattern of cross-modality guidance."""

    DISCREPANT = "discrepant"
    UNIDIRECTIONAL = "unidirectional"
    BIDIRECTIONAL = "bidirectional"


def _as_bool(value: Any) -> bool:
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off", ""):
            return False
        raise ConfigurationError(f"Cannot interpret {value!r} as a boolean")
    return bool(value)


def _as_int_tuple(value: Any) -> Tuple[int, ...]:
    if isinstance(value, str):
        value = [item for item in value.replace(" ", "").split(",") if item]
    try:
        return tuple(int(item) for item in value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Expected a list of integers, got {value!r}") from e


def _as_enum(enum_cls: Any, value: Any) -> Any:
    try:
        return enum_cls(value)
    except ValueError as e:
        choices = ", ".join(member.value for member in enum_cls)
        raise ConfigurationError(f"Invalid value {value!r}; expected one of: {choices}") from e


@dataclass
class BackboneConfig:
    """Configuration for the two-stream encoder."""

    scale: BackboneScale = BackboneScale.FULL
    stage_channels: Tuple[int, ...] = ()
    pretrained_weights_path: Optional[str] = None

    def __post_init__(self) -> None:
        self.scale = _as_enum(BackboneScale, self.scale)
        self.stage_channels = _as_int_tuple(self.stage_channels)
        if not self.stage_channels:
            self.stage_channels = (
                VGG16_STAGE_CHANNELS if self.scale is BackboneScale.FULL else TOY_STAGE_CHANNELS
            )

    @classmethod
    def toy(cls, stage_channels: Optional[Tuple[int, ...]] = None) -> BackboneConfig:
        """Create a narrow backbone suitable for CPU tests."""
        return cls(scale=BackboneScale.TOY, stage_channels=stage_channels or TOY_STAGE_CHANNELS)

    def validate(self) -> None:
        """Raise ConfigurationError if the backbone layout is inconsistent."""
        if len(self.stage_channels) != NUM_STAGES:
            raise ConfigurationError(
                f"Backbone needs exactly {NUM_STAGES} stage widths, got {len(self.stage_channels)}"
            )
        if any(c <= 0 for c in self.stage_channels):
            raise ConfigurationError(f"Stage widths must be positive: {self.stage_channels}")
        if self.scale is BackboneScale.FULL and self.stage_channels != VGG16_STAGE_CHANNELS:
            raise ConfigurationError(
                f"Full scale requires VGG16 widths {list(VGG16_STAGE_CHANNELS)}, "
                f"got {list(self.stage_channels)}"
            )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> BackboneConfig:
        """Create a BackboneConfig from a dictionary."""
        return cls(
            scale=data.get("scale", BackboneScale.FULL),
            stage_channels=data.get("stage_channels") or (),
            pretrained_weights_path=data.get("pretrained_weights_path"),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return {
            "scale": self.scale.value,
            "stage_channels": list(self.stage_channels),
            "pretrained_weights_path": self.pretrained_weights_path,
        }


@dataclass
class NetworkConfig:
    """Configuration for the assembled network and its experiment variants."""

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    interaction_mode: InteractionMode = InteractionMode.DISCREPANT
    without_rde: bool = False
    without_dse: bool = False
    without_ddr: bool = False
    low_stages: Tuple[int, ...] = DEFAULT_LOW_STAGES
    high_stages: Tuple[int, ...] = DEFAULT_HIGH_STAGES
    low_module: str = "rde"
    high_module: str = "dse"
    dse_alt_addition: bool = False
    top_fusion: bool = True
    reduction_ratio: int = DEFAULT_REDUCTION_RATIO
    rde_mask_activation: bool = True

    def __post_init__(self) -> None:
        self.interaction_mode = _as_enum(InteractionMode, self.interaction_mode)
        self.low_stages = _as_int_tuple(self.low_stages)
        self.high_stages = _as_int_tuple(self.high_stages)

    def validate(self) -> None:
        """Raise ConfigurationError if flags or stage assignment conflict."""
        self.backbone.validate()

        low, high = set(self.low_stages), set(self.high_stages)
        if low & high or low | high != set(range(1, NUM_STAGES + 1)):
            raise ConfigurationError(
                f"low_stages {sorted(low)} and high_stages {sorted(high)} must partition "
                f"stages 1..{NUM_STAGES}"
            )
        for name in ("low_module", "high_module"):
            if getattr(self, name) not in GUIDANCE_MODULES:
                raise ConfigurationError(
                    f"{name} must be one of {GUIDANCE_MODULES}, got {getattr(self, name)!r}"
                )
        if self.reduction_ratio < 1:
            raise ConfigurationError(f"reduction_ratio must be >= 1, got {self.reduction_ratio}")

        mode = self.interaction_mode
        if mode is InteractionMode.UNIDIRECTIONAL and self.without_rde:
            raise ConfigurationError(
                "unidirectional mode redirects the low-stage guidance that without_rde removes"
            )
        if mode is InteractionMode.BIDIRECTIONAL and (self.without_rde or self.without_dse):
            raise ConfigurationError("bidirectional mode requires both low and high interaction")
        if self.without_rde and self.low_module != "rde":
            raise ConfigurationError("without_rde conflicts with a substituted low-stage module")
        if self.without_dse and self.high_module != "dse":
            raise ConfigurationError("without_dse conflicts with a substituted high-stage module")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> NetworkConfig:
        """Create a NetworkConfig from a (nested) dictionary."""
        backbone = data.get("backbone", {})
        if isinstance(backbone, BackboneConfig):
            backbone_config = backbone
        else:
            backbone_config = BackboneConfig.from_dict(backbone)
        return cls(
            backbone=backbone_config,
            interaction_mode=data.get("interaction_mode", InteractionMode.DISCREPANT),
            without_rde=_as_bool(data.get("without_rde", False)),
            without_dse=_as_bool(data.get("without_dse", False)),
            without_ddr=_as_bool(data.get("without_ddr", False)),
            low_stages=data.get("low_stages", DEFAULT_LOW_STAGES),
            high_stages=data.get("high_stages", DEFAULT_HIGH_STAGES),
            low_module=data.get("low_module", "rde"),
            high_module=data.get("high_module", "dse"),
            dse_alt_addition=_as_bool(data.get("dse_alt_addition", False)),
            top_fusion=_as_bool(data.get("top_fusion", True)),
            reduction_ratio=int(data.get("reduction_ratio", DEFAULT_REDUCTION_RATIO)),
            rde_mask_activation=_as_bool(data.get("rde_mask_activation", True)),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return {
            "backbone": self.backbone.to_dict(),
            "interaction_mode": self.interaction_mode.value,
            "without_rde": self.without_rde,
            "without_dse": self.without_dse,
            "without_ddr": self.without_ddr,
            "low_stages": list(self.low_stages),
            "high_stages": list(self.high_stages),
            "low_module": self.low_module,
            "high_module": self.high_module,
            "dse_alt_addition": self.dse_alt_addition,
            "top_fusion": self.top_fusion,
            "reduction_ratio": self.reduction_ratio,
            "rde_mask_activation": self.rde_mask_activation,
        }


@dataclass
class TrainConfig:
    """Optimisation recipe: BCE loss, Adam, step-decayed learning rate."""

    batch_size: int = DEFAULT_BATCH_SIZE
    base_lr: float = DEFAULT_BASE_LR
    lr_decay_factor: float = DEFAULT_LR_DECAY_FACTOR
    lr_decay_period: int = DEFAULT_LR_DECAY_PERIOD
    total_epochs: int = DEFAULT_TOTAL_EPOCHS
    seed: int = 0
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    target_size: int = DEFAULT_TARGET_SIZE
    augment: bool = True
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY
    max_iterations: Optional[int] = None
    num_workers: int = 0
    device: str = "cpu"

    def validate(self) -> None:
        """Raise ConfigurationError for non-positive or inconsistent values."""
        positive = {
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "lr_decay_period": self.lr_decay_period,
            "total_epochs": self.total_epochs,
            "target_size": self.target_size,
            "checkpoint_every": self.checkpoint_every,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if self.lr_decay_factor <= 1:
            raise ConfigurationError(f"lr_decay_factor must exceed 1, got {self.lr_decay_factor}")
        if self.target_size % RESOLUTION_MULTIPLE:
            raise ConfigurationError(
                f"target_size must be a multiple of {RESOLUTION_MULTIPLE}, got {self.target_size}"
            )
        if self.max_iterations is not None and self.max_iterations <= 0:
            raise ConfigurationError(f"max_iterations must be positive, got {self.max_iterations}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> TrainConfig:
        """Create a TrainConfig from a dictionary."""
        max_iterations = data.get("max_iterations")
        betas = data.get("betas", (0.9, 0.999))
        if isinstance(betas, str):
            betas = betas.split(",")
        return cls(
            batch_size=int(data.get("batch_size", DEFAULT_BATCH_SIZE)),
            base_lr=float(data.get("base_lr", DEFAULT_BASE_LR)),
            lr_decay_factor=float(data.get("lr_decay_factor", DEFAULT_LR_DECAY_FACTOR)),
            lr_decay_period=int(data.get("lr_decay_period", DEFAULT_LR_DECAY_PERIOD)),
            total_epochs=int(data.get("total_epochs", DEFAULT_TOTAL_EPOCHS)),
            seed=int(data.get("seed", 0)),
            betas=(float(betas[0]), float(betas[1])),
            adam_eps=float(data.get("adam_eps", 1e-8)),
            target_size=int(data.get("target_size", DEFAULT_TARGET_SIZE)),
            augment=_as_bool(data.get("augment", True)),
            checkpoint_every=int(data.get("checkpoint_every", DEFAULT_CHECKPOINT_EVERY)),
            max_iterations=int(max_iterations) if max_iterations is not None else None,
            num_workers=int(data.get("num_workers", 0)),
            device=str(data.get("device", "cpu")),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return {
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "lr_decay_factor": self.lr_decay_factor,
            "lr_decay_period": self.lr_decay_period,
            "total_epochs": self.total_epochs,
            "seed": self.seed,
            "betas": list(self.betas),
            "adam_eps": self.adam_eps,
            "target_size": self.target_size,
            "augment": self.augment,
            "checkpoint_every": self.checkpoint_every,
            "max_iterations": self.max_iterations,
            "num_workers": self.num_workers,
            "device": self.device,
        }


BACKBONE_KEYS = frozenset(f.name for f in fields(BackboneConfig))
NETWORK_KEYS = frozenset(f.name for f in fields(NetworkConfig)) - {"backbone"}
TRAIN_KEYS = frozenset(f.name for f in fields(TrainConfig))
EXPERIMENT_KEYS = BACKBONE_KEYS | NETWORK_KEYS | TRAIN_KEYS


def _parse_env_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


@dataclass
class ExperimentConfig:
    """
    Flat key/value experiment file covering network and training settings.

    The on-disk form is a single JSON object whose keys are the field names
    of BackboneConfig, NetworkConfig and TrainConfig, for example::

        {"scale": "toy", "interaction_mode": "discrepant", "base_lr": 1e-4}
    """

    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ExperimentConfig:
        """Create an ExperimentConfig from a flat dictionary."""
        unknown = sorted(set(data) - EXPERIMENT_KEYS)
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}")

        backbone = BackboneConfig.from_dict({k: v for k, v in data.items() if k in BACKBONE_KEYS})
        network_data: Dict[str, Any] = {k: v for k, v in data.items() if k in NETWORK_KEYS}
        network_data["backbone"] = backbone
        return cls(
            network=NetworkConfig.from_dict(network_data),
            train=TrainConfig.from_dict({k: v for k, v in data.items() if k in TRAIN_KEYS}),
        )

    @classmethod
    def from_file(cls, config_path: str, use_env: bool = True) -> ExperimentConfig:
        """Load a flat JSON experiment file, then apply environment overrides."""
        with open(config_path, encoding="utf-8") as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ConfigurationError(f"{config_path} must contain a JSON object")
        if use_env:
            data.update(cls.env_overrides())
        return cls.from_dict(data)

    @classmethod
    def from_env(cls) -> ExperimentConfig:
        """Create a configuration from defaults plus ``CDINET_*`` variables."""
        return cls.from_dict(cls.env_overrides())

    @staticmethod
    def env_overrides() -> Dict[str, Any]:
        """Collect ``CDINET_<KEY>`` environment variables for known keys."""
        overrides: Dict[str, Any] = {}
        for key in EXPERIMENT_KEYS:
            raw = os.getenv(ENV_PREFIX + key.upper())
            if raw is not None:
                overrides[key] = _parse_env_value(raw)
        return overrides

    def to_dict(self) -> Dict[str, Any]:
        """Convert to the flat dictionary representation."""
        network = self.network.to_dict()
        data: Dict[str, Any] = dict(network.pop("backbone"))
        data.update(network)
        data.update(self.train.to_dict())
        return data

    def validate(self) -> None:
        """Validate both halves of the experiment."""
        self.network.validate()
        self.train.validate()

    def save(self, config_path: str) -> str:
        """Save the flat configuration to a JSON file."""
        Path(config_path).parent.mkdir(parents=True, exist_ok=True)
        with open(config_path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
        return config_path
