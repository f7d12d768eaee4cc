"""Lightweight image enhancement networks built from dense modulation blocks.

The package bundles a minimal 4-D autograd engine, the two generator
architectures (x4 super-resolution and same-resolution detail enhancement),
their training losses and optimizer recipe, synthetic degradation pipelines,
and PSNR/SSIM evaluation oracles. See the demos/ directory for narrative
walkthroughs of each piece and the ``densemod`` CLI for file-level use.
"""

from .config import TrainConfig, load_config, parse_config
from .degrade import DegradationSpec, bicubic_resize, jpeg_degrade, make_pair, oldphoto_degrade
from .losses import FeatureExtractor, LossWeights, fidelity_loss, perceptual_loss, rgan_losses, ssim_loss
from .metrics import MetricReport, psnr, ssim
from .nn import (
    ModelSpec,
    ParamStore,
    build_critic_params,
    build_generator_params,
    critic_forward,
    dense_modulation_block,
    enh_generator_forward,
    expected_param_count,
    generator_forward,
    modulate,
    modulation_layer,
    sfe_forward,
    spade_layer,
    sr_generator_forward,
)
from .optim import Adam, Schedule, he_init, lr_at
from .tensor import GraphError, ShapeError, Tape, Tensor
from .train import load_model, run_training, save_model
from .weights import WeightFileError, load_weights, save_weights

__all__ = [
    "Adam",
    "DegradationSpec",
    "FeatureExtractor",
    "GraphError",
    "LossWeights",
    "MetricReport",
    "ModelSpec",
    "ParamStore",
    "Schedule",
    "ShapeError",
    "Tape",
    "Tensor",
    "TrainConfig",
    "WeightFileError",
    "bicubic_resize",
    "build_critic_params",
    "build_generator_params",
    "critic_forward",
    "dense_modulation_block",
    "enh_generator_forward",
    "expected_param_count",
    "fidelity_loss",
    "generator_forward",
    "he_init",
    "jpeg_degrade",
    "load_config",
    "load_model",
    "load_weights",
    "lr_at",
    "make_pair",
    "modulate",
    "modulation_layer",
    "oldphoto_degrade",
    "parse_config",
    "perceptual_loss",
    "psnr",
    "rgan_losses",
    "run_training",
    "save_model",
    "save_weights",
    "sfe_forward",
    "spade_layer",
    "sr_generator_forward",
    "ssim",
    "ssim_loss",
]

__version__ = "0.1.0"
