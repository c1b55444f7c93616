"""Exception types raised by the kpstest package.

Each error class corresponds to a distinct failure mode so callers (and the
CLI, which maps them to exit codes) can react without string matching.
"""


class KpsError(Exception):
    """Base class for all kpstest errors."""


# --- linear algebra -------------------------------------------------------


class NonSquareError(KpsError):
    """A square matrix was required."""


class NotSymmetricError(KpsError):
    """Matrix asymmetry exceeds the allowed tolerance."""


class ShapeMismatchError(KpsError):
    """Array dimensions are inconsistent with the requested operation."""


class NotPositiveDefiniteError(KpsError):
    """Cholesky factorization hit a non-positive leading minor."""


class ZeroVectorError(KpsError):
    """A (near) zero vector where a unit vector was required."""


class RankExceedsDimensionError(KpsError):
    """Requested pseudo-inverse rank is larger than the matrix dimension."""


class ConvergenceFailureError(KpsError):
    """Iterative SVD failed to converge."""


# --- statistical core -----------------------------------------------------


class InvalidArgumentError(KpsError):
    """Argument outside the function's domain (negative x, prob not in (0,1), ...)."""


class DimensionError(KpsError):
    """p or k too small for the hypothesis to be testable."""


class SingularSecondMomentError(KpsError):
    """Second-moment matrix of residuals or regressors is not positive definite."""


class TooFewClustersError(KpsError):
    """Fewer than two distinct cluster labels."""


class DegenerateSampleError(KpsError):
    """Moment matrix numerically broken (zero or not positive semidefinite)."""


class BlockSingularError(KpsError):
    """A trailing SVD block required to be invertible is numerically singular."""


class SigmaOutOfRangeError(KpsError):
    """Deviation scale sigma outside [0, sqrt(n))."""


# --- data handling / CLI --------------------------------------------------


class ParseError(KpsError):
    """Malformed CSV or non-numeric cell in a numeric column."""


class SchemaError(KpsError):
    """A designated column is absent or flag combination is unusable."""


class EmptyAfterFilteringError(KpsError):
    """No rows survive missing-value filtering."""


class RankDeficientDesignError(KpsError):
    """A regression design block is rank deficient; message names the block."""
