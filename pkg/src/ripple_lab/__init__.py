"""Peeling-decoder analysis workbench for LT codes.

Exact decoder-state distributions, asymptotic ripple and cloud moment
curves, finite-length corrections, and deterministic Monte Carlo
ensembles, cross-validated against each other.
"""

__version__ = "0.1.0"

from .degree_dist import (
    DegreeDistribution,
    make_capped_soliton,
    make_ideal_soliton,
    make_single_degree,
    parse_distribution,
)
from .errors import (
    AnalysisError,
    ComparisonFailure,
    NumericalInstabilityError,
    SingularityError,
    UnsupportedDistributionError,
)
from .lt_codec import encode, peel_decode
from .exact_recursion import run_exact, exact_pu, approx_pu, wr_pu
from .analytic_moments import constants, curves, h_curve, leading_variance
from .finite_length import discrepancies, refine_curves, refined_R, refined_variance
from .montecarlo import compare, run_ensemble

__all__ = [
    "__version__",
    "AnalysisError",
    "ComparisonFailure",
    "DegreeDistribution",
    "NumericalInstabilityError",
    "SingularityError",
    "UnsupportedDistributionError",
    "approx_pu",
    "compare",
    "constants",
    "curves",
    "discrepancies",
    "encode",
    "exact_pu",
    "h_curve",
    "leading_variance",
    "make_capped_soliton",
    "make_ideal_soliton",
    "make_single_degree",
    "parse_distribution",
    "peel_decode",
    "refine_curves",
    "refined_R",
    "refined_variance",
    "run_ensemble",
    "run_exact",
    "wr_pu",
]
