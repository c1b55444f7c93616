"""Chi-square distribution routines and seedable normal sampling.

The central CDF is the regularized lower incomplete gamma function; the
noncentral CDF is the Poisson mixture of central CDFs, summed outward from
the Poisson mode and truncated once the remaining mass drops below 1e-13.
Quantiles are found by bisection refined with Newton steps, so the
CDF/quantile round trip is accurate by construction.

Random draws come from the counter-based Philox generator keyed by a
(seed, stream) pair, which makes per-replication streams reproducible and
order-independent; normal variates use numpy's ziggurat transform.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from kpstest.exceptions import InvalidArgumentError

_TAIL_BOUND = 1e-13


@dataclass(frozen=True)
class Chi2Spec:
    """Degrees of freedom and noncentrality of a chi-square distribution."""

    df: int
    noncentrality: float = 0.0

    def __post_init__(self):
        if self.df < 1 or int(self.df) != self.df:
            raise InvalidArgumentError(f"df must be a positive integer, got {self.df}")
        if not np.isfinite(self.noncentrality) or self.noncentrality < 0:
            raise InvalidArgumentError(f"noncentrality must be finite and >= 0, got {self.noncentrality}")


def chi2_cdf(x, df):
    """Central chi-square CDF, P(df/2, x/2)."""
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0):
        raise InvalidArgumentError("x must be finite and >= 0")
    if df < 1:
        raise InvalidArgumentError(f"df must be >= 1, got {df}")
    out = special.gammainc(df / 2.0, x / 2.0)
    return float(out) if out.ndim == 0 else out


def chi2_pdf(x, df):
    """Central chi-square density (used for Newton refinement)."""
    if x <= 0:
        return 0.0
    h = df / 2.0
    return math.exp((h - 1.0) * math.log(x) - x / 2.0 - h * math.log(2.0) - math.lgamma(h))


def chi2_quantile(prob, df):
    """Quantile of the central chi-square distribution.

    Brackets the root, bisects until the interval is small, then polishes
    with Newton steps on the CDF.
    """
    if not (0.0 < prob < 1.0):
        raise InvalidArgumentError(f"prob must be in (0, 1), got {prob}")
    if df < 1:
        raise InvalidArgumentError(f"df must be >= 1, got {df}")

    lo, hi = 0.0, df + 10.0 * math.sqrt(2.0 * df) + 10.0
    while chi2_cdf(hi, df) < prob:
        hi *= 2.0
        if hi > 1e300:
            raise InvalidArgumentError(f"quantile bracket overflow for prob={prob}")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, df) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(hi, 1.0):
            break
    x = 0.5 * (lo + hi)
    for _ in range(4):
        pdf = chi2_pdf(x, df)
        if pdf <= 0:
            break
        step = (chi2_cdf(x, df) - prob) / pdf
        x_new = x - step
        if not (lo <= x_new <= hi):
            break
        x = x_new
    return x


def noncentral_chi2_cdf(x, spec):
    """Noncentral chi-square CDF via the Poisson mixture of central CDFs.

    For ``spec.noncentrality == 0`` this reduces exactly to :func:`chi2_cdf`.
    The mixture is summed outward from the Poisson mode; truncation error is
    bounded by the un-summed Poisson mass, kept below 1e-13.
    """
    if not np.isfinite(x) or x < 0:
        raise InvalidArgumentError(f"x must be finite and >= 0, got {x}")
    if not isinstance(spec, Chi2Spec):
        spec = Chi2Spec(*spec) if isinstance(spec, tuple) else Chi2Spec(spec)
    delta = spec.noncentrality
    if delta == 0.0:
        return chi2_cdf(x, spec.df)
    if x == 0.0:
        return 0.0

    half = delta / 2.0
    mode = int(half)
    log_w_mode = -half + mode * math.log(half) - math.lgamma(mode + 1) if mode > 0 else -half
    w_mode = math.exp(log_w_mode)

    total = w_mode * chi2_cdf(x, spec.df + 2 * mode)
    mass = w_mode

    # Poisson weights below the mode (finitely many, decaying fast).
    w = w_mode
    for j in range(mode, 0, -1):
        w *= j / half
        total += w * chi2_cdf(x, spec.df + 2 * (j - 1))
        mass += w
        if w < _TAIL_BOUND * 1e-4:
            break
    # Weights above the mode, until the un-summed mass is negligible.
    w = w_mode
    j = mode
    while mass < 1.0 - _TAIL_BOUND and w > 0.0:
        j += 1
        w *= half / j
        total += w * chi2_cdf(x, spec.df + 2 * j)
        mass += w
    return min(total, 1.0)


@dataclass(frozen=True)
class RngStream:
    """Identifier of one reproducible random stream.

    The pair (seed, stream) keys a Philox counter-based generator, so the
    same pair always yields the same sequence regardless of what other
    streams were consumed; distinct pairs give statistically independent
    streams.
    """

    seed: int
    stream: int = 0

    def generator(self):
        mask = (1 << 64) - 1
        key = ((self.seed & mask) << 64) | (self.stream & mask)
        return np.random.Generator(np.random.Philox(key=key))


def standard_normal(stream, n):
    """Draw ``n`` iid N(0, 1) variates from the given stream."""
    if n < 0:
        raise InvalidArgumentError(f"n must be >= 0, got {n}")
    return stream.generator().standard_normal(int(n))
