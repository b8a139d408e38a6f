"""Numerical laboratory for partially hyperbolic torus maps with mostly expanding center."""

from .kernels import BACKEND
from .torus import (
    AnosovSpec,
    InvalidMapError,
    ManeDASpec,
    anosov,
    apply,
    derivative,
    eigen_data,
    inverse_apply,
    mane,
    torus_distance,
    validate_mane_spec,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AnosovSpec",
    "InvalidMapError",
    "ManeDASpec",
    "anosov",
    "apply",
    "derivative",
    "eigen_data",
    "inverse_apply",
    "mane",
    "torus_distance",
    "validate_mane_spec",
]
