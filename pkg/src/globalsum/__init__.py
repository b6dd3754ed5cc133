"""Simulation and verification of global-sum protocols on regular networks."""

from .engine import (
    Protocol,
    ProtocolResult,
    Schedule,
    StepMatrix,
    run_linear_schedule,
    run_protocol,
    validate_step,
)
from .graph import CayleySpec, Graph, build_family, metrics, parse_family
from .spectral import adjacency_spectrum, chebyshev_polynomial, diameter_bound, hoffman_factors

__version__ = "0.1.0"

__all__ = [
    "CayleySpec",
    "Graph",
    "Protocol",
    "ProtocolResult",
    "Schedule",
    "StepMatrix",
    "adjacency_spectrum",
    "build_family",
    "chebyshev_polynomial",
    "diameter_bound",
    "hoffman_factors",
    "metrics",
    "parse_family",
    "run_linear_schedule",
    "run_protocol",
    "validate_step",
]
