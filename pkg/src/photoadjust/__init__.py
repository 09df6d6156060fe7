"""Semantics-aware photo adjustment: low-rank bilinear color regression
conditioned on learned context, with latent retouching-preset discovery.
"""

from .colorspace import lab_l2_distance, lab_to_srgb, srgb_to_lab
from .config import TrainConfig, parse_variant
from .model import AdjustmentModel, ModelConfig

__version__ = "0.1.0"

__all__ = [
    "AdjustmentModel",
    "ModelConfig",
    "TrainConfig",
    "lab_l2_distance",
    "lab_to_srgb",
    "parse_variant",
    "srgb_to_lab",
    "__version__",
]
