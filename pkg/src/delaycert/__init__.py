"""Certification and simulation of predictor feedback under uncertain input delay."""

from . import dde, lmi, linalg, pde, sdp
from .exceptions import (AssumptionError, DelayCertError, DimensionError, DivergenceError,
                         IndeterminateError, PlacementError, PreconditionError, SymmetryError)
from .lmi import (CertificationProblem, LkCertificate, build_problem, check_feasibility,
                  delta_E, delta_star, max_delta, small_gain_delta)

__version__ = "0.1.0"

__all__ = [
    "dde", "lmi", "linalg", "pde", "sdp",
    "AssumptionError", "DelayCertError", "DimensionError", "DivergenceError",
    "IndeterminateError", "PlacementError", "PreconditionError", "SymmetryError",
    "CertificationProblem", "LkCertificate", "build_problem", "check_feasibility",
    "delta_E", "delta_star", "max_delta", "small_gain_delta",
]
