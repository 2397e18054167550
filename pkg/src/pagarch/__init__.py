"""
pagarch: panel ARMA-GARCH estimation with fixed effects.

Two-step estimation (concentrated least squares for the ARMA part, variance
targeted quasi maximum likelihood for the GARCH part), bias corrections,
inference on the unit effects, quadratic-form limit theory tools, Monte Carlo
harness and density forecasting.
"""

from pagarch.errors import ConfigError, EstimationError, PanelDataError, ParameterError
from pagarch.kernels import BACKEND
from pagarch.model import (
    ArmaParams,
    GarchParams,
    Innovation,
    ModelOrders,
    PanelData,
    garch_filter,
    residual_filter,
    simulate,
    validate_arma,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ArmaParams",
    "ConfigError",
    "EstimationError",
    "GarchParams",
    "Innovation",
    "ModelOrders",
    "PanelData",
    "PanelDataError",
    "ParameterError",
    "garch_filter",
    "residual_filter",
    "simulate",
    "validate_arma",
]
