"""Monte Carlo experiments: null rejection probabilities and local power.

Replications are independent; each one draws from its own counter-based
stream keyed by (seed, replication index), so results are bit-identical for
a given seed no matter how replications are scheduled across workers.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from kpstest.core import (
    KpsSample,
    build_moments,
    degrees_of_freedom,
    estimate,
    nearest_kps,
    parameter_count,
    _kpst_star_statistic,
    _kpst_statistic,
    _resolve_policy,
)
from kpstest.distributions import Chi2Spec, RngStream, chi2_quantile, noncentral_chi2_cdf
from kpstest.exceptions import DimensionError, InvalidArgumentError, SigmaOutOfRangeError

DEFAULT_LEVELS = (0.10, 0.05, 0.01)

# (p, k, n) grids behind the two replication presets; n follows the
# n = (pk)^(16/3) and n = (pk)^4 rules respectively.
TABLE_POW16_3_GRID = [
    (2, 2, 1626),
    (2, 3, 14130),
    (2, 4, 65536),
    (2, 5, 215444),
    (3, 2, 14130),
    (3, 3, 122827),
]
TABLE_POW4_GRID = [
    (2, 2, 256),
    (2, 3, 1296),
    (2, 4, 4096),
    (2, 5, 10000),
    (2, 6, 20736),
    (2, 7, 38416),
    (3, 2, 1296),
    (3, 3, 6561),
    (3, 4, 20736),
    (3, 5, 50625),
    (3, 6, 104976),
    (3, 7, 194481),
]

DGP_VARIANTS = ("homoskedastic", "scalar-hetero")


def sample_size_rule(p, k, rule):
    """Resolve the sample-size rule 'pow16-3' or 'pow4' to an integer n.

    The fractional-power rule rounds up, which reproduces every n in the
    preset grids exactly.
    """
    if rule == "pow16-3":
        return math.ceil((p * k) ** (16.0 / 3.0) - 1e-9)
    if rule == "pow4":
        return (p * k) ** 4
    raise InvalidArgumentError(f"unknown sample size rule: {rule!r}")


def dgp_null(p, k, n, variant, stream):
    """Draw a sample whose moment matrix has exact Kronecker structure.

    Regressors are iid standard normal; residuals are conditionally normal
    with scalar variance h(Z) equal to 1 ('homoskedastic') or ||Z||^2 / k
    ('scalar-hetero').  Either way the population moment matrix factors, so
    the null holds exactly.
    """
    if variant not in DGP_VARIANTS:
        raise InvalidArgumentError(f"variant must be one of {DGP_VARIANTS}, got {variant!r}")
    g = stream.generator()
    z = g.standard_normal((n, k))
    v = g.standard_normal((n, p))
    if variant == "scalar-hetero":
        h = np.sum(z * z, axis=1) / k
        v *= np.sqrt(h)[:, None]
    return KpsSample(v, z)


def local_bc(sigma, n):
    """Variance parameters (b, c) of the local-deviation design.

    They satisfy b + c = 2 + sigma/sqrt(n) and b c = 1 - sigma/sqrt(n); at
    sigma = 0 both equal 1 and the design collapses to the exact null.
    """
    s = sigma / math.sqrt(n)
    root = math.sqrt(s * (s + 8.0))
    b = 0.5 * s - 0.5 * root + 1.0
    c = 0.5 * s + 0.5 * root + 1.0
    return b, c


def dgp_local(n, sigma, stream):
    """Draw a p = k = 2 sample whose moment matrix deviates from Kronecker
    structure at the 1/sqrt(n) scale.

    The first half of the sample uses variances (diag(b, 1), diag(1, c)) for
    (residuals, regressors) and the second half the mirrored pair, producing
    the population moment matrix I_4 + (sigma / (2 sqrt(n))) diag(1,-1,-1,1).
    """
    if not (0.0 <= sigma < math.sqrt(n)):
        raise SigmaOutOfRangeError(f"sigma must be in [0, sqrt(n)), got {sigma} with n={n}")
    b, c = local_bc(sigma, n)
    g = stream.generator()
    half = n // 2
    z = g.standard_normal((n, 2))
    v = g.standard_normal((n, 2))
    v[:half, 0] *= math.sqrt(b)
    z[:half, 1] *= math.sqrt(c)
    v[half:, 1] *= math.sqrt(b)
    z[half:, 0] *= math.sqrt(c)
    return KpsSample(v, z)


def local_noncentrality(sigma):
    """Noncentrality of the chi-square limit for the local design.

    The design's deviation matrix is (sigma/2) diag(1,-1,-1,1); evaluating
    the noncentrality quadratic form at the Gaussian design covariance gives
    sigma^2 / 4 exactly (see tests for the cross-check).
    """
    return sigma * sigma / 4.0


def gaussian_moment_covariance(p, k):
    """Asymptotic covariance of the unique-element moment estimator under
    the iid standard-normal design (residuals independent of regressors).

    Fourth moments of a standard normal vector make the blocks explicit:
    E[vech(VV') vech(VV')'] has entries delta_ab delta_cd + delta_ac
    delta_bd + delta_ad delta_bc over vech index pairs.
    """

    def fourth(m):
        idx = [(i, j) for j in range(m) for i in range(j, m)]
        q = len(idx)
        a4 = np.zeros((q, q))
        for s, (i, j) in enumerate(idx):
            for t, (c, d) in enumerate(idx):
                a4[s, t] = (i == j) * (c == d) + (i == c) * (j == d) + (i == d) * (j == c)
        mean = np.array([1.0 * (i == j) for (i, j) in idx])
        return a4, mean

    ap, mp_ = fourth(p)
    bk, mk_ = fourth(k)
    return np.kron(bk, ap) - np.kron(np.outer(mk_, mk_), np.outer(mp_, mp_))


@dataclass
class SizeExperiment:
    """Null-rejection-probability experiment for one (p, k, n, dgp) cell."""

    p: int
    k: int
    n: int | None = None
    n_rule: str = "explicit"
    dgp: str = "homoskedastic"
    reps: int = 10_000
    levels: tuple = DEFAULT_LEVELS
    seed: int = 0

    def resolved_n(self):
        if self.n_rule != "explicit":
            return sample_size_rule(self.p, self.k, self.n_rule)
        if self.n is None:
            raise InvalidArgumentError("explicit sample size requires n")
        return int(self.n)

    def __post_init__(self):
        if min(self.p, self.k) < 2:
            raise DimensionError(
                f"p={self.p}, k={self.k}: the structure hypothesis is vacuous for a "
                "univariate factor; need min(p, k) >= 2"
            )
        if self.reps < 1:
            raise InvalidArgumentError("reps must be >= 1")
        if not all(0.0 < lv < 1.0 for lv in self.levels):
            raise InvalidArgumentError("levels must lie in (0, 1)")
        if self.dgp not in DGP_VARIANTS:
            raise InvalidArgumentError(f"dgp must be one of {DGP_VARIANTS}")


@dataclass
class PowerExperiment:
    """Local-power experiment over a grid of deviation scales sigma."""

    n: int
    sigma_grid: tuple = (0.0, 1.0, 2.0, 3.0, 4.0)
    reps: int = 2_000
    levels: tuple = DEFAULT_LEVELS
    seed: int = 0
    include_star: bool = True

    def __post_init__(self):
        if self.reps < 1:
            raise InvalidArgumentError("reps must be >= 1")
        if not all(0.0 < lv < 1.0 for lv in self.levels):
            raise InvalidArgumentError("levels must lie in (0, 1)")
        for s in self.sigma_grid:
            if not (np.isfinite(s) and 0.0 <= s < math.sqrt(self.n)):
                raise SigmaOutOfRangeError(
                    f"sigma values must be finite and in [0, sqrt(n)); got {s}"
                )


def _kpst_statistic_only(sample):
    moments = build_moments(sample, normalize=True)
    est = estimate(moments)
    fit = nearest_kps(est.r_hat, est.p, est.k)
    policy = _resolve_policy("fixed", degrees_of_freedom(est.p, est.k))
    stat, _ = _kpst_statistic(est, fit, "full", policy)
    return stat


def _kpst_statistic_pair(sample):
    """KPST and KPST* from one shared set of moment computations."""
    moments = build_moments(sample, normalize=True)
    est = estimate(moments)
    fit = nearest_kps(est.r_hat, est.p, est.k)
    policy = _resolve_policy("fixed", degrees_of_freedom(est.p, est.k))
    stat, _ = _kpst_statistic(est, fit, "full", policy)
    (star, _), _ = _kpst_star_statistic(est, policy)
    return stat, star


def _size_chunk(args):
    p, k, n, variant, seed, start, stop, thresholds = args
    counts = np.zeros(len(thresholds), dtype=np.int64)
    for rep in range(start, stop):
        sample = dgp_null(p, k, n, variant, RngStream(seed, rep))
        stat = _kpst_statistic_only(sample)
        counts += stat > thresholds
    return counts


def _power_chunk(args):
    n, sigma, sigma_index, reps, seed, start, stop, thresholds, include_star = args
    counts = np.zeros(len(thresholds), dtype=np.int64)
    counts_star = np.zeros(len(thresholds), dtype=np.int64)
    for rep in range(start, stop):
        stream = RngStream(seed, sigma_index * reps + rep)
        sample = dgp_local(n, sigma, stream)
        if include_star:
            stat, star = _kpst_statistic_pair(sample)
            counts_star += star > thresholds
        else:
            stat = _kpst_statistic_only(sample)
        counts += stat > thresholds
    return counts, counts_star


def _chunk_ranges(reps, workers):
    size = max(1, math.ceil(reps / max(1, workers) / 4))
    return [(s, min(s + size, reps)) for s in range(0, reps, size)]


def _run_chunks(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_size(exp, workers=1):
    """Estimate null rejection probabilities for one experiment.

    Returns a long-format table with one row per nominal level and columns
    (p, k, n, df, m, level, nrp_pct, mc_se_pct, dgp).  The Monte Carlo
    standard error is sqrt(level (1 - level) / reps), in percent.
    """
    n = exp.resolved_n()
    df = degrees_of_freedom(exp.p, exp.k)
    thresholds = np.array([chi2_quantile(1.0 - lv, df) for lv in exp.levels])
    jobs = [
        (exp.p, exp.k, n, exp.dgp, exp.seed, start, stop, thresholds)
        for start, stop in _chunk_ranges(exp.reps, workers)
    ]
    counts = sum(_run_chunks(_size_chunk, jobs, workers))
    rows = []
    for lv, cnt in zip(exp.levels, counts):
        rows.append(
            {
                "p": exp.p,
                "k": exp.k,
                "n": n,
                "df": df,
                "m": parameter_count(exp.p, exp.k),
                "level": lv,
                "nrp_pct": 100.0 * cnt / exp.reps,
                "mc_se_pct": 100.0 * math.sqrt(lv * (1.0 - lv) / exp.reps),
                "dgp": exp.dgp,
            }
        )
    return pd.DataFrame(rows)


def run_power(exp, workers=1):
    """Estimate rejection rates under local deviations, with the asymptotic
    noncentral chi-square rejection rate alongside.

    Returns a table with one row per (sigma, level) and columns (sigma,
    level, power_kpst, power_kpst_star, power_asymptotic, mc_se); the
    rotation-dependent variant column is NaN when not requested.
    """
    df = degrees_of_freedom(2, 2)
    thresholds = np.array([chi2_quantile(1.0 - lv, df) for lv in exp.levels])
    rows = []
    for si, sigma in enumerate(exp.sigma_grid):
        jobs = [
            (exp.n, sigma, si, exp.reps, exp.seed, start, stop, thresholds, exp.include_star)
            for start, stop in _chunk_ranges(exp.reps, workers)
        ]
        results = _run_chunks(_power_chunk, jobs, workers)
        counts = sum(r[0] for r in results)
        counts_star = sum(r[1] for r in results)
        delta = local_noncentrality(sigma)
        for lv, thr, cnt, cnt_star in zip(exp.levels, thresholds, counts, counts_star):
            power = cnt / exp.reps
            rows.append(
                {
                    "sigma": sigma,
                    "level": lv,
                    "power_kpst": power,
                    "power_kpst_star": (cnt_star / exp.reps) if exp.include_star else np.nan,
                    "power_asymptotic": 1.0 - noncentral_chi2_cdf(thr, Chi2Spec(df, delta)),
                    "mc_se": math.sqrt(max(power * (1.0 - power), 1e-12) / exp.reps),
                }
            )
    return pd.DataFrame(rows)


def paper_table(which, reps=10_000, seed=0, workers=1, levels=DEFAULT_LEVELS):
    """Replicate a full size table: one row per (p, k, n) with rejection
    percentages for both DGPs at each level, in the published column order.
    """
    grid = {1: TABLE_POW16_3_GRID, 2: TABLE_POW4_GRID}.get(which)
    if grid is None:
        raise InvalidArgumentError(f"table preset must be 1 or 2, got {which}")
    rows = []
    for p, k, n in grid:
        row = {
            "p": p,
            "k": k,
            "n": n,
            "a": degrees_of_freedom(p, k),
            "m": parameter_count(p, k),
        }
        for dgp in DGP_VARIANTS:
            exp = SizeExperiment(p=p, k=k, n=n, dgp=dgp, reps=reps, levels=levels, seed=seed)
            table = run_size(exp, workers=workers)
            tag = "homo" if dgp == "homoskedastic" else "hetero"
            for lv, nrp in zip(table["level"], table["nrp_pct"]):
                row[f"{tag}_{lv:g}"] = nrp
        rows.append(row)
    return pd.DataFrame(rows)
