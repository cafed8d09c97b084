"""Finite-fuel purchasing under an Ornstein-Uhlenbeck price.

Closed-form free boundaries and value functions in the reflecting and
repelling regimes, Monte Carlo policy evaluation, and a grid solver for the
variational inequality.
"""

from .errors import (
    BracketError,
    ConfigError,
    ConvergenceError,
    DomainError,
    InconsistencyError,
    MonotonicityError,
    RegimeError,
)
from .model import CostFn, ModelParams, Regime, RegimeKind, regime

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "ConfigError",
    "ConvergenceError",
    "CostFn",
    "DomainError",
    "InconsistencyError",
    "ModelParams",
    "MonotonicityError",
    "Regime",
    "RegimeError",
    "RegimeKind",
    "regime",
]
