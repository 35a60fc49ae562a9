"""Numerical G-expectation toolkit: G-heat solver, G-normal law, cylinder
G-expectations, pathwise stochastic calculus and SDEs under volatility
uncertainty."""

from .errors import (
    ConfigurationError,
    ExtrapolationError,
    GCalcError,
    NumericError,
    ParameterError,
    SchemaError,
    ShapeError,
)
from .kernels import BACKEND
from .pde import GParams, Resolution

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "ExtrapolationError",
    "GCalcError",
    "GParams",
    "NumericError",
    "ParameterError",
    "Resolution",
    "SchemaError",
    "ShapeError",
]
__version__ = "0.1.0"
