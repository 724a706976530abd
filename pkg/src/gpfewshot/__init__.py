"""Gaussian-process optimisation with few evaluations.

Two-sided acquisition policies (EI2, UCB2) on finite arm sets with exact
noise-free conditioning, closed-form regret bounds, and a seeded Monte
Carlo harness that checks those bounds empirically.
"""

from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    ExhaustedError,
    GPFewShotError,
    InconsistentObservationError,
    NumericalError,
    ResourceError,
)
from .engine import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "ContractError",
    "DomainError",
    "ExhaustedError",
    "GPFewShotError",
    "InconsistentObservationError",
    "NumericalError",
    "ResourceError",
    "__version__",
]
