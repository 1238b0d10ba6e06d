"""Continuous-time structural failure time model for intermittent treatment.

Thin wrapper over the C++ core: dispensation geometry, the counterfactual
time transform and its inverse, cohort simulation, and the three-step
IPCW-weighted g-estimation pipeline.
"""

from ._ctsftm import (
    ConfigError,
    ConvergenceError,
    DomainError,
    NonIdentifiabilityError,
    PositivityError,
    ValidationError,
    estimate,
    gap_times,
    invert_mimicking,
    mimicking_gradient,
    mimicking_time,
    normalize_dispensations,
    simulate,
    treatment_indicator,
)

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "NonIdentifiabilityError",
    "PositivityError",
    "ValidationError",
    "estimate",
    "gap_times",
    "invert_mimicking",
    "mimicking_gradient",
    "mimicking_time",
    "normalize_dispensations",
    "simulate",
    "treatment_indicator",
]

__version__ = "0.1.0"
