"""Finite-volume simulator for a quasilinear Keller-Segel system with signal-suppressed motility."""
from .core import (FieldState, GridSpec, LinearResponse, ModelParams, SaturatingResponse,
                   response_value, target_state, validate_params)
from .stepper import RunReport, StepControl, StepOutcome, StopRule, run_until, stable_dt, step

__all__ = [
    "FieldState", "GridSpec", "LinearResponse", "ModelParams", "SaturatingResponse",
    "response_value", "target_state", "validate_params",
    "RunReport", "StepControl", "StepOutcome", "StopRule", "run_until", "stable_dt", "step",
]
__version__ = "0.1.0"
