"""Structured exceptions shared by every module.

Each exception carries the data a caller needs to react (offending orbit
index, failing stage, diagnostic traces) as plain attributes.
"""

from __future__ import annotations


class SpecialFlowError(Exception):
    """Base class for all package errors."""

    def to_dict(self) -> dict:
        out = {"error": type(self).__name__, "message": str(self)}
        for key, val in vars(self).items():
            if not key.startswith("_"):
                out[key] = val
        return out


class RationalInput(SpecialFlowError, ValueError):
    """The rotation number is rational (its expansion terminates)."""


class PrecisionExhausted(SpecialFlowError, ArithmeticError):
    """The configured bit budget cannot certify the requested quantity."""


class RuleViolation(SpecialFlowError, ValueError):
    """An x_s rule produced x_s >= 1/q_s outside the exempt prefix."""

    def __init__(self, message: str, s: int | None = None, x_s: float | None = None, q_s: int | None = None):
        super().__init__(message)
        self.s = s
        self.x_s = x_s
        self.q_s = q_s


class SingularityProximity(SpecialFlowError, ArithmeticError):
    """An orbit point came within sigma_min of a singularity."""

    def __init__(self, message: str, j: int | None = None, singularity: int | None = None, distance: float | None = None):
        super().__init__(message)
        self.j = j
        self.singularity = singularity
        self.distance = distance


class NonResonanceViolated(SpecialFlowError, ValueError):
    """An orbit interval entered a forbidden neighbourhood of a singularity."""

    def __init__(self, message: str, j: int | None = None, i: int | None = None):
        super().__init__(message)
        self.j = j
        self.i = i


class NonResonanceBothSides(SpecialFlowError, ValueError):
    """Neither the forward nor the backward non-resonance branch holds."""

    def __init__(self, message: str, forward_hit: tuple | None = None, backward_hit: tuple | None = None):
        super().__init__(message)
        self.forward_hit = forward_hit
        self.backward_hit = backward_hit


class NoDriftFound(SpecialFlowError):
    """The drift scan ended without entering the band; carries the e_R trace."""

    def __init__(self, message: str, trace: list | None = None, direction: str | None = None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.direction = direction


class OutOfRange(SpecialFlowError, ValueError):
    """A pair distance falls outside the scales covered by the expansion."""


class ConstructionFailed(SpecialFlowError):
    """A finite stage of a constructive argument came out empty."""

    def __init__(self, message: str, stage: str = "", diagnostics: dict | None = None):
        super().__init__(message)
        self.stage = stage
        self.diagnostics = dict(diagnostics or {})


class ConfigInvalid(SpecialFlowError, ValueError):
    """Configuration or descriptor could not be parsed or validated."""
