"""Mesoscale concrete fracture toolkit.

Generates random three-phase concrete mesostructures (aggregate, interfacial
transition zone, mortar matrix), rasterizes them onto regular grids, runs
quasi-static cohesive phase-field fracture simulations, and assembles the
resulting fields into binary training tensors with accompanying
stress-strain curves and damage-map evaluation metrics.
"""

__version__ = "0.1.0"

from .errors import (
    MesofracError,
    ConfigError,
    DegenerateGeometryError,
    InfeasibleOffsetError,
    CandidateRejected,
    PartialPackingError,
    SolverFailureError,
    ParseError,
    TensorFormatError,
)

__all__ = [
    "__version__",
    "MesofracError",
    "ConfigError",
    "DegenerateGeometryError",
    "InfeasibleOffsetError",
    "CandidateRejected",
    "PartialPackingError",
    "SolverFailureError",
    "ParseError",
    "TensorFormatError",
]
