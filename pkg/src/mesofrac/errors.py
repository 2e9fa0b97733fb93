"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class MesofracError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MesofracError):
    """Invalid configuration value or file."""


class DegenerateGeometryError(MesofracError):
    """Geometric input has no valid interpretation (e.g. collinear hull input)."""


class InfeasibleOffsetError(MesofracError):
    """Inward polygon offset exceeds the polygon's inradius."""


class CandidateRejected(MesofracError):
    """An aggregate candidate failed a placement check; recoverable by resampling."""


class PartialPackingError(MesofracError):
    """Placement attempts exhausted before the target volume fraction was reached."""

    def __init__(self, achieved_vf: float, placed: int, attempts: int):
        self.achieved_vf = achieved_vf
        self.placed = placed
        self.attempts = attempts
        super().__init__(
            f"packing stalled at volume fraction {achieved_vf:.4f} "
            f"after {attempts} attempts ({placed} aggregates placed)"
        )


class SolverFailureError(MesofracError):
    """A linear or nonlinear solve failed to converge."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class ParseError(MesofracError):
    """Malformed input file; message carries line/field context."""


class TensorFormatError(MesofracError):
    """Binary tensor file is malformed (bad magic, dims, or truncation)."""
