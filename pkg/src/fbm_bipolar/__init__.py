"""Spectral simulation lab for a 2-D stochastic bipolar fluid driven by cylindrical fBm."""
from ._backend import BACKEND
from .fbm import DomainError, HurstParam, kernel_KH, sample_fbm
from .spectral import SpectralVelocityField
from .stoch_conv import NoiseRealization, conv_variance
from .solver import SolveConfig, global_solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DomainError",
    "HurstParam",
    "NoiseRealization",
    "SolveConfig",
    "SpectralVelocityField",
    "conv_variance",
    "global_solve",
    "kernel_KH",
    "sample_fbm",
    "__version__",
]
