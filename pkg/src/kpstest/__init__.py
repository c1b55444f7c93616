"""Test for Kronecker product structure of a covariance matrix.

The package tests whether the second-moment matrix of paired moments
``V_i kron Z_i`` factors into a Kronecker product of two symmetric positive
definite matrices, reports the nearest factorization and its distance, and
ships a Monte Carlo harness for size and power experiments plus a CLI for
CSV datasets.
"""

__version__ = "0.1.0"

from kpstest.core import (
    KpsEstimates,
    KpsResult,
    KpsSample,
    MomentSet,
    NkpFit,
    NoncentralitySpec,
    build_moments,
    degrees_of_freedom,
    estimate,
    kpst,
    kpst_star,
    lambda_hat,
    nearest_kps,
    noncentrality,
    parameter_count,
)
from kpstest.distributions import (
    Chi2Spec,
    RngStream,
    chi2_cdf,
    chi2_quantile,
    noncentral_chi2_cdf,
    standard_normal,
)
from kpstest.montecarlo import (
    PowerExperiment,
    SizeExperiment,
    dgp_local,
    dgp_null,
    run_power,
    run_size,
)

__all__ = [
    "__version__",
    "Chi2Spec",
    "KpsEstimates",
    "KpsResult",
    "KpsSample",
    "MomentSet",
    "NkpFit",
    "NoncentralitySpec",
    "PowerExperiment",
    "RngStream",
    "SizeExperiment",
    "build_moments",
    "chi2_cdf",
    "chi2_quantile",
    "degrees_of_freedom",
    "dgp_local",
    "dgp_null",
    "estimate",
    "kpst",
    "kpst_star",
    "lambda_hat",
    "nearest_kps",
    "noncentral_chi2_cdf",
    "noncentrality",
    "parameter_count",
    "run_power",
    "run_size",
    "standard_normal",
]
