"""
CDINet - RGB-D salient object detection with cross-modality discrepant interaction.

Two VGG16-style encoders process the RGB image and its depth map. Low-level
stages let RGB refine depth, high-level stages let depth enhance RGB
semantics, and a dense decoder turns the interacted features into a
saliency map. Features include:

- Configurable interaction direction and module placement
- Named ablation and substitution variants
- Training with step-decayed Adam and checkpointing
- Max F-measure, S-measure and MAE evaluation with PR curves
"""

from cdinet.config import (
    BackboneConfig,
    BackboneScale,
    ExperimentConfig,
    InteractionMode,
    NetworkConfig,
    TrainConfig,
)
from cdinet.exceptions import (
    CDINetError,
    ConfigurationError,
    DataError,
    PretrainedWeightsError,
    ShapeError,
    TrainingDivergedError,
)
from cdinet.network import VARIANTS, CDINet, Checkpoint, build_network, variant_config
from cdinet.report import MetricReport, evaluate_dataset
from cdinet.trainer import train

__version__ = "1.0.0"
__license__ = "MIT"

__all__ = [
    # Version info
    "__version__",
    "__license__",
    # Config
    "BackboneConfig",
    "BackboneScale",
    "ExperimentConfig",
    "InteractionMode",
    "NetworkConfig",
    "TrainConfig",
    # Errors
    "CDINetError",
    "ConfigurationError",
    "DataError",
    "PretrainedWeightsError",
    "ShapeError",
    "TrainingDivergedError",
    # Network
    "CDINet",
    "Checkpoint",
    "VARIANTS",
    "build_network",
    "variant_config",
    # Training and evaluation
    "train",
    "MetricReport",
    "evaluate_dataset",
]
