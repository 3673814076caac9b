"""Sparse polynomial approximation of scalar- and Hilbert-valued functions.

Samples are fitted by the weighted square-root LASSO over a hyperbolic
cross of tensor Legendre or Chebyshev polynomials, solved with a
(restarted) primal-dual iteration.
"""
from ._backend import COMPILED
from .hilbert import GramOperator
from .index_sets import MultiIndexSet, hyperbolic_cross, hyperbolic_cross_infinite
from .orthopoly import build_measurement_matrix, intrinsic_weights, operator_norm_estimate
from .pipeline import PolynomialApproximant, ProblemSpec, approximate, relative_error
from .srlasso import SolverConfig, SolveReport, primal_dual, restarted, restarted_with_stop

__version__ = "0.1.0"

__all__ = [
    "COMPILED",
    "GramOperator",
    "MultiIndexSet",
    "hyperbolic_cross",
    "hyperbolic_cross_infinite",
    "build_measurement_matrix",
    "intrinsic_weights",
    "operator_norm_estimate",
    "PolynomialApproximant",
    "ProblemSpec",
    "approximate",
    "relative_error",
    "SolverConfig",
    "SolveReport",
    "primal_dual",
    "restarted",
    "restarted_with_stop",
]
