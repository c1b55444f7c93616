"""Core of the Kronecker-product-structure (KPS) covariance test.

The null hypothesis is that the second-moment matrix of the stacked moments
``f_i = V_i kron Z_i`` factors as ``G1 kron G2`` with symmetric positive
definite factors.  Rearranging the moment matrix turns this into a rank-one
restriction, tested by a Wald-type quadratic form in the trailing part of the
rearranged matrix's SVD, with a Moore-Penrose-inverted covariance weight.
The statistic is asymptotically chi-square with
``df = (p(p+1)/2 - 1) (k(k+1)/2 - 1)`` degrees of freedom.

All covariance weighting is carried out in half-vectorized coordinates: the
rearranged moment matrix factors through the duplication matrices as
``D_p R* D_k'`` where ``R*`` collects the unique elements, so the large
``(pk)^2``-square covariance never has to be materialized on the hot path.
"""

from dataclasses import dataclass, field

import numpy as np

from kpstest.distributions import chi2_cdf
from kpstest.exceptions import (
    DegenerateSampleError,
    DimensionError,
    NotSymmetricError,
    ShapeMismatchError,
    SingularSecondMomentError,
    TooFewClustersError,
)
from kpstest.linalg import (
    FixedRank,
    Tolerance,
    cholesky_lower,
    duplication_matrix,
    inverse_rearrange,
    orth_complement,
    polar_orthogonal,
    pseudo_inverse,
    rearrange,
    svd_partitioned,
    unvec,
    vec,
)

NEAR_TIE_RELATIVE_GAP = 1e-10

# Upper bound on doubles held by one chunk of the moment projection.
_CHUNK_BUDGET = 1 << 21


def degrees_of_freedom(p, k):
    """Number of restrictions tested: (p(p+1)/2 - 1) (k(k+1)/2 - 1)."""
    return (p * (p + 1) // 2 - 1) * (k * (k + 1) // 2 - 1)


def parameter_count(p, k):
    """Unique elements of the moment matrix: p(p+1)/2 * k(k+1)/2."""
    return (p * (p + 1) // 2) * (k * (k + 1) // 2)


@dataclass
class KpsSample:
    """Paired residual and regressor observations.

    Parameters
    ----------
    vhat : ndarray of shape (n, p)
        Residual vectors, one per row.
    z : ndarray of shape (n, k)
        Regressor vectors, one per row.
    clusters : array-like of length n, optional
        Cluster labels; observations sharing a label are aggregated into one
        moment vector and treated as independent units across labels.
    """

    vhat: np.ndarray
    z: np.ndarray
    clusters: np.ndarray | None = None

    def __post_init__(self):
        self.vhat = np.asarray(self.vhat, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.vhat.ndim != 2 or self.z.ndim != 2:
            raise ShapeMismatchError("vhat and z must be 2-dimensional arrays")
        if self.vhat.shape[0] != self.z.shape[0]:
            raise ShapeMismatchError(
                f"row counts differ: vhat has {self.vhat.shape[0]}, z has {self.z.shape[0]}"
            )
        if not (np.all(np.isfinite(self.vhat)) and np.all(np.isfinite(self.z))):
            raise ShapeMismatchError("vhat and z must be finite")
        n, p = self.vhat.shape
        k = self.z.shape[1]
        if min(p, k) < 2:
            raise DimensionError(
                f"p={p}, k={k}: with a univariate factor every moment matrix has "
                "Kronecker structure, so there is nothing to test; need min(p, k) >= 2"
            )
        if n < 2:
            raise ShapeMismatchError(f"need at least 2 observations, got {n}")
        if self.clusters is not None:
            labels = np.asarray(self.clusters)
            if labels.shape != (n,):
                raise ShapeMismatchError(
                    f"clusters must have length {n}, got shape {labels.shape}"
                )
            if np.unique(labels).size < 2:
                raise TooFewClustersError("need at least 2 distinct cluster labels")
            self.clusters = labels

    @property
    def n(self):
        return self.vhat.shape[0]

    @property
    def p(self):
        return self.vhat.shape[1]

    @property
    def k(self):
        return self.z.shape[1]


@dataclass
class MomentSet:
    """Stacked moment rows ``(V_i kron Z_i)'`` after whitening/aggregation.

    When built from clustered data each row is the within-cluster sum and
    ``f`` has one row per cluster.
    """

    f: np.ndarray
    p: int
    k: int
    normalized: bool
    clustered: bool = False
    n_observations: int | None = None

    @property
    def n_effective(self):
        return self.f.shape[0]


@dataclass
class KpsEstimates:
    """Moment matrix, its unique-element form, and their covariance.

    ``r_star`` holds the unique elements (vech coordinates); ``v_star`` is
    the estimated covariance of ``vec(r_star)``.  The covariance of the full
    rearranged matrix is the duplication-matrix sandwich, exposed as
    :attr:`v_hat` and computed on demand.
    """

    r_hat: np.ndarray
    r_star: np.ndarray
    v_star: np.ndarray
    p: int
    k: int
    n_effective: int
    warnings: list = field(default_factory=list)

    @property
    def v_hat(self):
        dkp = np.kron(duplication_matrix(self.k), duplication_matrix(self.p))
        return dkp @ self.v_star @ dkp.T


@dataclass
class NkpFit:
    """Nearest Kronecker-product factorization of a moment matrix.

    ``ds`` is the Frobenius distance to the best rank-one fit of the
    rearranged matrix (root sum of squares of trailing singular values).
    ``g1`` is normalized to have unit upper-left element.
    """

    g1: np.ndarray
    g2: np.ndarray
    ds: float
    svd: object
    gap_ok: bool
    asymmetry: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def singular_values(self):
        return self.svd.sigma


@dataclass
class KpsResult:
    """Outcome of one structure test."""

    statistic: float
    df: int
    p_value: float
    method: str
    clustered: bool
    nkp: NkpFit
    n_effective: int
    warnings: list
    normalized: bool

    def reject(self, level=0.05):
        return self.p_value < level


@dataclass
class NoncentralitySpec:
    """Ingredients of the local-alternative noncentrality parameter.

    ``a0_full`` is the symmetric perturbation added to ``g1 kron g2`` at the
    1/sqrt(n) scale; ``v_rstar`` is the asymptotic covariance of the
    unique-element moment estimator under the limiting design.
    """

    g1: np.ndarray
    g2: np.ndarray
    a0_full: np.ndarray
    v_rstar: np.ndarray

    def __post_init__(self):
        self.g1 = np.asarray(self.g1, dtype=float)
        self.g2 = np.asarray(self.g2, dtype=float)
        self.a0_full = np.asarray(self.a0_full, dtype=float)
        self.v_rstar = np.asarray(self.v_rstar, dtype=float)
        p, k = self.g1.shape[0], self.g2.shape[0]
        if self.a0_full.shape != (k * p, k * p):
            raise ShapeMismatchError(f"a0_full must be {(k * p, k * p)}, got {self.a0_full.shape}")
        if np.max(np.abs(self.a0_full - self.a0_full.T)) > 1e-10:
            raise NotSymmetricError("a0_full must be symmetric")
        q = parameter_count(p, k)
        if self.v_rstar.shape != (q, q):
            raise ShapeMismatchError(f"v_rstar must be {(q, q)}, got {self.v_rstar.shape}")


# --- moment construction ----------------------------------------------------


def _whiten(x, what):
    n = x.shape[0]
    second_moment = x.T @ x / n
    try:
        cholesky_lower(second_moment)
    except Exception as exc:
        raise SingularSecondMomentError(
            f"second-moment matrix of {what} is not positive definite"
        ) from exc
    c = cholesky_lower(np.linalg.inv(second_moment))
    return x @ c


def _cluster_index(labels):
    """Map labels to contiguous ids ordered by first appearance."""
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse], order.size


def build_moments(sample, normalize=True):
    """Form the moment rows ``(V_i kron Z_i)'``, whitened and aggregated.

    With ``normalize`` on (the default) the residuals and regressors are
    first whitened by the Cholesky factors of the inverses of their
    second-moment matrices; this makes the resulting test invariant to any
    nonsingular linear transformation of either block.  Cluster aggregation
    sums the per-observation rows within each cluster afterwards.
    """
    v = sample.vhat
    z = sample.z
    if not np.any(v):
        raise DegenerateSampleError("residual matrix is numerically zero")
    if normalize:
        v = _whiten(v, "residuals")
        z = _whiten(z, "regressors")
    n, p = v.shape
    k = z.shape[1]
    f = (v[:, :, None] * z[:, None, :]).reshape(n, p * k)
    clustered = sample.clusters is not None
    if clustered:
        idx, n_clusters = _cluster_index(sample.clusters)
        if n_clusters < 2:
            raise TooFewClustersError("need at least 2 distinct cluster labels")
        agg = np.zeros((n_clusters, p * k))
        np.add.at(agg, idx, f)
        f = agg
    return MomentSet(f=f, p=p, k=k, normalized=normalize, clustered=clustered, n_observations=n)


def estimate(moments):
    """Moment matrix, unique-element matrix, and their covariance.

    Each moment row contributes its rearranged outer product projected onto
    half-vectorized coordinates; for plain observation rows this reproduces
    the vech outer products exactly, and for cluster-aggregated rows it is
    the natural plug-in.  Accumulation is chunked so large samples never
    materialize the per-row projections all at once.
    """
    f = moments.f
    n, kp = f.shape
    p, k = moments.p, moments.k
    if n < 2:
        raise DegenerateSampleError(f"need at least 2 moment rows, got {n}")
    qp, qk = p * (p + 1) // 2, k * (k + 1) // 2
    dim = qp * qk

    # Row-wise projection onto half-vectorized coordinates:  with G the
    # (p, k) reshaping of a moment row, the (rc, uw) element of the
    # projected contribution is (G[r,u] G[c,w] + G[r,w] G[c,u]) / 2 over
    # vech index pairs r >= c and u >= w; for a Kronecker row V kron Z this
    # is exactly vech(VV') vech(ZZ')'.
    row_p, col_p = np.triu_indices(p)
    row_k, col_k = np.triu_indices(k)

    sum_w = np.zeros(dim)
    sum_ww = np.zeros((dim, dim))
    chunk = max(1, _CHUNK_BUDGET // (4 * dim))
    for start in range(0, n, chunk):
        g = f[start : start + chunk].reshape(-1, p, k)
        gr = g[:, col_p, :]
        gc = g[:, row_p, :]
        s = 0.5 * (
            gr[:, :, col_k] * gc[:, :, row_k] + gr[:, :, row_k] * gc[:, :, col_k]
        )
        w = s.transpose(0, 2, 1).reshape(g.shape[0], dim)
        sum_w += w.sum(axis=0)
        sum_ww += w.T @ w

    vec_rstar = sum_w / n
    v_star = sum_ww / n - np.outer(vec_rstar, vec_rstar)
    v_star = (v_star + v_star.T) / 2.0
    r_star = unvec(vec_rstar, qp, qk)
    r_hat = inverse_rearrange(
        duplication_matrix(p) @ r_star @ duplication_matrix(k).T, p, k
    )

    warnings = []
    eigs = np.linalg.eigvalsh((r_hat + r_hat.T) / 2.0)
    scale = max(eigs[-1], 0.0)
    if scale <= 0.0:
        raise DegenerateSampleError("moment matrix is numerically zero")
    if eigs[0] < -1e-8 * max(scale, 1.0):
        msg = (
            f"moment matrix has eigenvalue {eigs[0]:.3e}, not positive semidefinite"
        )
        if not moments.clustered:
            raise DegenerateSampleError(msg)
        # Cluster aggregation keeps only the symmetric-block part of each
        # outer product, which can be indefinite in small samples; the
        # statistic stays well defined, so record it instead of failing.
        warnings.append("indefinite-moment-matrix: " + msg)
    return KpsEstimates(
        r_hat=r_hat, r_star=r_star, v_star=v_star, p=p, k=k, n_effective=n, warnings=warnings
    )


# --- nearest Kronecker product ----------------------------------------------


def nearest_kps(r_hat, p, k):
    """Best Kronecker-product approximation of a symmetric (kp, kp) matrix.

    The rearranged matrix is decomposed by SVD; the leading singular pair
    yields the factors and the trailing singular values the distance.  The
    reshaped factors are symmetrized (rounding can leave them asymmetric at
    machine level) and ``g1`` carries the unit-normalized leading element.
    """
    r_hat = np.asarray(r_hat, dtype=float)
    warnings = []
    m = rearrange(r_hat, p, k)
    part = svd_partitioned(m)
    sigma = part.sigma

    min_eig = np.linalg.eigvalsh((r_hat + r_hat.T) / 2.0)[0]
    if min_eig <= 0:
        warnings.append(
            "not-positive-definite: input matrix has min eigenvalue "
            f"{min_eig:.3e}; factor positive definiteness is not guaranteed"
        )

    gap_ok = sigma[0] - sigma[1] > NEAR_TIE_RELATIVE_GAP * sigma[0] if sigma[0] > 0 else False
    if not gap_ok:
        warnings.append(
            "near-tie: leading singular values are numerically tied; the "
            "nearest Kronecker factorization is not unique"
        )
    if abs(part.L11) < 1e-300:
        raise DegenerateSampleError("leading singular vector has zero first element")

    vec_g1 = part.L1 / part.L11
    vec_g2 = part.L11 * sigma[0] * part.N1
    g1_raw = unvec(vec_g1, p, p)
    g2_raw = unvec(vec_g2, k, k)
    asymmetry = max(
        float(np.max(np.abs(g1_raw - g1_raw.T))), float(np.max(np.abs(g2_raw - g2_raw.T)))
    )
    g1 = (g1_raw + g1_raw.T) / 2.0
    g2 = (g2_raw + g2_raw.T) / 2.0
    ds = float(np.sqrt(np.sum(sigma[1:] ** 2)))
    return NkpFit(
        g1=g1, g2=g2, ds=ds, svd=part, gap_ok=gap_ok, asymmetry=asymmetry, warnings=warnings
    )


def lambda_hat(fit):
    """Trailing-block matrix of the rank decomposition plus the complements.

    Returns ``(lam, g1_perp, g2_perp)`` such that the rearranged matrix
    equals ``vec(g1) vec(g2)' + g1_perp lam g2_perp'`` with orthonormal
    complement matrices satisfying ``g1_perp' vec(g1) = 0``.
    """
    part = fit.svd
    p_orth = polar_orthogonal(part.L22, "trailing left singular block")
    q_orth = polar_orthogonal(part.N22, "trailing right singular block")
    lam = p_orth @ part.Sigma2 @ q_orth.T
    g1_perp = part.L2 @ p_orth.T
    g2_perp = part.N2 @ q_orth.T
    return lam, g1_perp, g2_perp


# --- test statistics ---------------------------------------------------------


def _resolve_policy(rank_policy, df):
    if rank_policy in (None, "fixed"):
        return FixedRank(df)
    if rank_policy == "tolerance":
        return Tolerance(1e-10)
    if isinstance(rank_policy, (FixedRank, Tolerance)):
        return rank_policy
    raise ValueError(f"unknown rank policy: {rank_policy!r}")


def _quadratic_form(x, weight, policy, n):
    weight = (weight + weight.T) / 2.0
    w_inv, info = pseudo_inverse(weight, policy, return_info=True)
    stat = float(n * x @ w_inv @ x)
    return max(stat, 0.0), info


def _kpst_statistic(est, fit, method, policy):
    """Wald statistic from the rearranged-matrix SVD (full or simplified form)."""
    dp = duplication_matrix(est.p)
    dk = duplication_matrix(est.k)
    part = fit.svd
    if method == "full":
        lam, g1_perp, g2_perp = lambda_hat(fit)
        kmat = np.kron(g2_perp.T @ dk, g1_perp.T @ dp)
        x = vec(lam)
    elif method == "simplified":
        kmat = np.kron(part.N2.T @ dk, part.L2.T @ dp)
        x = vec(part.Sigma2)
    else:
        raise ValueError(f"method must be 'full' or 'simplified', got {method!r}")
    weight = kmat @ est.v_star @ kmat.T
    return _quadratic_form(x, weight, policy, est.n_effective)


def _kpst_star_statistic(est, policy):
    """Wald statistic built directly on the unique-element matrix."""
    part = svd_partitioned(est.r_star)
    p_orth = polar_orthogonal(part.L22, "trailing left singular block")
    q_orth = polar_orthogonal(part.N22, "trailing right singular block")
    lam = p_orth @ part.Sigma2 @ q_orth.T
    g1_perp = part.L2 @ p_orth.T
    g2_perp = part.N2 @ q_orth.T
    kmat = np.kron(g2_perp.T, g1_perp.T)
    weight = kmat @ est.v_star @ kmat.T
    return _quadratic_form(vec(lam), weight, policy, est.n_effective), part


def _common_warnings(fit, est, info):
    warnings = list(est.warnings) + list(fit.warnings)
    p, k = est.p, est.k
    if est.n_effective < (p * k) ** 4:
        warnings.append(
            f"small-sample: n={est.n_effective} is below (pk)^4={(p * k) ** 4}; "
            "the chi-square approximation may over-reject"
        )
    if info.get("rank_deficient"):
        warnings.append(
            "rank-deficient: covariance weight has fewer numerically nonzero "
            "eigenvalues than the nominal degrees of freedom"
        )
    return warnings


def kpst(sample, normalize=True, method="full", rank_policy="fixed"):
    """Run the rotation-invariant structure test on a sample.

    Parameters
    ----------
    sample : KpsSample
    normalize : bool
        Whiten residuals and regressors first (default).  Required for
        invariance to general nonsingular transformations; the statistic is
        invariant to orthonormal transformations either way.
    method : {"full", "simplified"}
        Two algebraically equivalent forms of the same statistic; exposed
        for cross-checking.
    rank_policy : {"fixed", "tolerance"} or a policy object
        Spectral cutoff for the Moore-Penrose-inverted weight.  "fixed"
        keeps exactly ``df`` eigenvalues, the rank the limit theory assigns.

    Returns
    -------
    KpsResult
    """
    moments = build_moments(sample, normalize=normalize)
    est = estimate(moments)
    fit = nearest_kps(est.r_hat, est.p, est.k)
    df = degrees_of_freedom(est.p, est.k)
    policy = _resolve_policy(rank_policy, df)
    stat, info = _kpst_statistic(est, fit, method, policy)
    return KpsResult(
        statistic=stat,
        df=df,
        p_value=1.0 - chi2_cdf(stat, df),
        method="kpst",
        clustered=moments.clustered,
        nkp=fit,
        n_effective=est.n_effective,
        warnings=_common_warnings(fit, est, info),
        normalized=normalize,
    )


def kpst_star(sample, normalize=True, rank_policy="fixed"):
    """Variant statistic built on the unique-element matrix directly.

    Shares the limiting distribution and degrees of freedom with
    :func:`kpst` but is not invariant to orthonormal transformations of the
    data, so no rotation normalization is applied.
    """
    moments = build_moments(sample, normalize=normalize)
    est = estimate(moments)
    fit = nearest_kps(est.r_hat, est.p, est.k)
    df = degrees_of_freedom(est.p, est.k)
    policy = _resolve_policy(rank_policy, df)
    (stat, info), _ = _kpst_star_statistic(est, policy)
    return KpsResult(
        statistic=stat,
        df=df,
        p_value=1.0 - chi2_cdf(stat, df),
        method="kpst-star",
        clustered=moments.clustered,
        nkp=fit,
        n_effective=est.n_effective,
        warnings=_common_warnings(fit, est, info),
        normalized=normalize,
    )


def noncentrality(spec):
    """Noncentrality of the chi-square limit under a local deviation.

    Projects the rearranged perturbation onto the orthogonal complements of
    the factor vectorizations and evaluates the Moore-Penrose-inverted
    quadratic form in the asymptotic covariance.
    """
    p = spec.g1.shape[0]
    k = spec.g2.shape[0]
    vg1 = vec(spec.g1)
    vg2 = vec(spec.g2)
    g1_perp = orth_complement(vg1 / np.linalg.norm(vg1))
    g2_perp = orth_complement(vg2 / np.linalg.norm(vg2))
    a0 = g1_perp.T @ rearrange(spec.a0_full, p, k) @ g2_perp
    dp = duplication_matrix(p)
    dk = duplication_matrix(k)
    kmat = np.kron(g2_perp.T @ dk, g1_perp.T @ dp)
    weight = kmat @ spec.v_rstar @ kmat.T
    df = degrees_of_freedom(p, k)
    w_inv = pseudo_inverse((weight + weight.T) / 2.0, FixedRank(df))
    x = vec(a0)
    return max(float(x @ w_inv @ x), 0.0)
