"""Special flows over irrational rotations with logarithmic and power singularities."""

from __future__ import annotations

__version__ = "0.1.0"

from .arithmetic import CirclePoint, ContinuedFraction, cf_expand, sieve
from .birkhoff import BirkhoffRequest, birkhoff_diff, birkhoff_sum
from .ceiling import CeilingSpec, Singularity, eval_f, integral_f
from .drift import DriftParams, find_drift, swr_ensemble
from .errors import (
    ConfigInvalid,
    ConstructionFailed,
    NoDriftFound,
    NonResonanceBothSides,
    NonResonanceViolated,
    OutOfRange,
    PrecisionExhausted,
    RationalInput,
    RuleViolation,
    SingularityProximity,
    SpecialFlowError,
)
from .specialflow import PhasePoint, flow_step

__all__ = [
    "BirkhoffRequest",
    "CeilingSpec",
    "CirclePoint",
    "ConfigInvalid",
    "ConstructionFailed",
    "ContinuedFraction",
    "DriftParams",
    "NoDriftFound",
    "NonResonanceBothSides",
    "NonResonanceViolated",
    "OutOfRange",
    "PhasePoint",
    "PrecisionExhausted",
    "RationalInput",
    "RuleViolation",
    "Singularity",
    "SingularityProximity",
    "SpecialFlowError",
    "birkhoff_diff",
    "birkhoff_sum",
    "cf_expand",
    "eval_f",
    "find_drift",
    "flow_step",
    "integral_f",
    "sieve",
    "swr_ensemble",
]
