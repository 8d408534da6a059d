"""Transformer encoder-decoder GAN for single image super-resolution, on a small numpy autodiff core."""

from .discriminator import Discriminator, DiscriminatorConfig
from .errors import (
    ConfigError,
    DecodeError,
    DimensionError,
    NonFiniteLossError,
    NumericDomainError,
    PreconditionError,
    SRTransGANError,
    UsageError,
)
from .generator import Generator, GeneratorConfig, super_resolve
from .metrics import MetricReport, luma, psnr, ssim
from .saliency import SaliencyMap, render_colormap, saliency_map

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DecodeError",
    "DimensionError",
    "Discriminator",
    "DiscriminatorConfig",
    "Generator",
    "GeneratorConfig",
    "MetricReport",
    "NonFiniteLossError",
    "NumericDomainError",
    "PreconditionError",
    "SRTransGANError",
    "SaliencyMap",
    "UsageError",
    "luma",
    "psnr",
    "render_colormap",
    "saliency_map",
    "ssim",
    "super_resolve",
]
