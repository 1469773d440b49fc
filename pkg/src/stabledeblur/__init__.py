"""Noise-robust image deblurring: blur model, stabilizers, small CNN reconstructors
and accuracy/stability estimators."""
from .errors import ConfigError, DimensionError, InvalidParameterError, TrainingDivergedError
from .imaging import (
    BlurOperator,
    NoiseSpec,
    Psf,
    add_noise,
    blur_adjoint,
    blur_apply,
    gaussian_psf,
    identity_psf,
    pseudo_inverse_apply,
)

__version__ = "0.1.0"

__all__ = [
    "BlurOperator",
    "ConfigError",
    "DimensionError",
    "InvalidParameterError",
    "NoiseSpec",
    "Psf",
    "TrainingDivergedError",
    "add_noise",
    "blur_adjoint",
    "blur_apply",
    "gaussian_psf",
    "identity_psf",
    "pseudo_inverse_apply",
]
