"""Dense linear-algebra kernels for the Kronecker-structure test.

Vectorization follows the column-major convention throughout: ``vec`` stacks
columns and ``vech`` stacks the columns of the lower triangle.  Matrices are
plain ``numpy`` arrays; the functions here only add the validation and the
deterministic choices (sign conventions, complement bases) the statistical
layer relies on.
"""

from dataclasses import dataclass

import numpy as np

from kpstest.exceptions import (
    BlockSingularError,
    ConvergenceFailureError,
    NonSquareError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    RankExceedsDimensionError,
    ShapeMismatchError,
    ZeroVectorError,
)

SYMMETRY_TOL = 1e-10


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ShapeMismatchError(f"{name} contains non-finite entries")
    return a


def vec(a):
    """Stack the columns of ``a`` into a single vector."""
    return _as_matrix(a).ravel(order="F")


def unvec(x, rows, cols):
    """Inverse of :func:`vec` for a known target shape."""
    x = np.asarray(x, dtype=float)
    if x.size != rows * cols:
        raise ShapeMismatchError(f"cannot reshape length-{x.size} vector to {rows}x{cols}")
    return x.reshape(rows, cols, order="F")


def vech(a, tol=SYMMETRY_TOL):
    """Half-vectorize a symmetric matrix (lower triangle, column-stacked).

    Parameters
    ----------
    a : ndarray of shape (m, m)
        Symmetric matrix.
    tol : float
        Maximum absolute asymmetry accepted.

    Returns
    -------
    ndarray of length m (m + 1) / 2
    """
    a = _as_matrix(a)
    m, m2 = a.shape
    if m != m2:
        raise NonSquareError(f"vech requires a square matrix, got {a.shape}")
    asym = np.max(np.abs(a - a.T)) if m > 1 else 0.0
    if asym > tol:
        raise NotSymmetricError(f"matrix asymmetry {asym:.3e} exceeds tolerance {tol:.1e}")
    r, c = np.triu_indices(m)
    # (c, r) enumerates the lower triangle ordered by column, then row
    return a[c, r].copy()


def unvech(x):
    """Rebuild the symmetric matrix whose :func:`vech` is ``x``."""
    x = np.asarray(x, dtype=float)
    m = int(round((np.sqrt(8 * x.size + 1) - 1) / 2))
    if m * (m + 1) // 2 != x.size:
        raise ShapeMismatchError(f"length {x.size} is not a triangular number")
    out = np.zeros((m, m))
    r, c = np.triu_indices(m)
    out[c, r] = x
    out[r, c] = x
    return out


def duplication_matrix(m):
    """Duplication matrix D_m with D_m vech(A) = vec(A) for symmetric A.

    Shape is (m^2, m (m + 1) / 2).  Columns for diagonal vech positions have a
    single unit entry; off-diagonal positions have two.
    """
    if m < 1:
        raise ShapeMismatchError("dimension must be >= 1")
    h = m * (m + 1) // 2
    d = np.zeros((m * m, h))
    pos = 0
    for j in range(m):
        for i in range(j, m):
            d[j * m + i, pos] = 1.0
            if i != j:
                d[i * m + j, pos] = 1.0
            pos += 1
    return d


def duplication_complement(m):
    """Orthonormal complement of the duplication matrix.

    Columns are (e_i kron e_j - e_j kron e_i) / sqrt(2) for i < j in
    lexicographic order, spanning the antisymmetric directions of vec space.
    For m = 1 the complement is empty and a (1, 0) matrix is returned.
    """
    if m < 1:
        raise ShapeMismatchError("dimension must be >= 1")
    cols = m * (m - 1) // 2
    d = np.zeros((m * m, cols))
    pos = 0
    s = 1.0 / np.sqrt(2.0)
    for i in range(m):
        for j in range(i + 1, m):
            d[i * m + j, pos] = s
            d[j * m + i, pos] = -s
            pos += 1
    return d


def vech_projector(m):
    """Matrix H with H vec(A) = vech((A + A') / 2); equals (D'D)^-1 D'."""
    d = duplication_matrix(m)
    scale = 1.0 / d.sum(axis=0)
    return scale[:, None] * d.T


def rearrange(a, p, k):
    """Permute a (kp, kp) block matrix into the (p^2, k^2) rearranged form.

    Row (j * p + i) of the output is vec of the (i, j) block of ``a`` (blocks
    of size k x k), so a Kronecker product G1 kron G2 maps to the rank-one
    matrix vec(G1) vec(G2)'.  The operation permutes entries, preserving the
    Frobenius norm.
    """
    a = _as_matrix(a)
    if a.shape != (k * p, k * p):
        raise ShapeMismatchError(f"expected shape {(k * p, k * p)}, got {a.shape}")
    return a.reshape(p, k, p, k).transpose(2, 0, 3, 1).reshape(p * p, k * k).copy()


def inverse_rearrange(r, p, k):
    """Inverse permutation of :func:`rearrange`."""
    r = _as_matrix(r)
    if r.shape != (p * p, k * k):
        raise ShapeMismatchError(f"expected shape {(p * p, k * k)}, got {r.shape}")
    return r.reshape(p, p, k, k).transpose(1, 3, 0, 2).reshape(k * p, k * p).copy()


@dataclass
class SvdPartition:
    """Full SVD of a rectangular matrix with the leading 1 x 1 split.

    ``L`` (rows x rows) and ``N`` (cols x cols) are orthonormal, ``sigma``
    holds the singular values in non-increasing order, and the first
    left/right singular vector pair is sign-fixed so that ``L[0, 0] >= 0``.
    The named blocks follow the split after the first singular value.
    """

    L: np.ndarray
    sigma: np.ndarray
    N: np.ndarray

    @property
    def shape(self):
        return (self.L.shape[0], self.N.shape[0])

    @property
    def sigma1(self):
        return self.sigma[0]

    @property
    def L11(self):
        return self.L[0, 0]

    @property
    def L1(self):
        return self.L[:, 0]

    @property
    def L2(self):
        return self.L[:, 1:]

    @property
    def L22(self):
        return self.L[1:, 1:]

    @property
    def N1(self):
        return self.N[:, 0]

    @property
    def N2(self):
        return self.N[:, 1:]

    @property
    def N22(self):
        return self.N[1:, 1:]

    @property
    def Sigma2(self):
        """Trailing singular values as a rectangular diagonal block."""
        rows, cols = self.shape
        out = np.zeros((rows - 1, cols - 1))
        tail = self.sigma[1:]
        out[: tail.size, : tail.size][np.diag_indices(tail.size)] = tail
        return out

    def reconstruct(self):
        rows, cols = self.shape
        s = np.zeros((rows, cols))
        s[np.diag_indices(self.sigma.size)] = self.sigma
        return self.L @ s @ self.N.T


def svd_partitioned(m):
    """Full SVD with the (sigma1 | Sigma2) partition and L11 >= 0 sign fix."""
    m = _as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailureError(f"SVD failed to converge: {exc}") from exc
    n = vt.T
    if u[0, 0] < 0:
        u = u.copy()
        n = n.copy()
        u[:, 0] *= -1.0
        n[:, 0] *= -1.0
    return SvdPartition(L=u, sigma=s, N=n)


class FixedRank:
    """Pseudo-inverse policy keeping exactly the r largest eigenvalues."""

    def __init__(self, rank):
        if rank < 0:
            raise RankExceedsDimensionError("rank must be non-negative")
        self.rank = int(rank)

    def __repr__(self):
        return f"FixedRank({self.rank})"


class Tolerance:
    """Pseudo-inverse policy keeping eigenvalues above rtol * lambda_max."""

    def __init__(self, rtol=1e-10):
        self.rtol = float(rtol)

    def __repr__(self):
        return f"Tolerance({self.rtol})"


# Eigenvalues this far below the largest kept one are numerical zeros; a
# FixedRank request reaching into them is reported via `rank_deficient`.
_NUMERICAL_ZERO = 1e-13


def pseudo_inverse(s, policy=None, return_info=False):
    """Moore-Penrose inverse of a symmetric PSD matrix with a rank policy.

    Parameters
    ----------
    s : ndarray of shape (m, m)
        Symmetric positive semidefinite matrix.
    policy : FixedRank or Tolerance, optional
        Spectral cutoff rule; defaults to ``Tolerance(1e-10)``.
    return_info : bool
        If True also return a dict with the retained rank and a
        ``rank_deficient`` flag (a FixedRank request hit numerically zero
        eigenvalues, which are left un-inverted).
    """
    s = _as_matrix(s)
    m, m2 = s.shape
    if m != m2:
        raise NonSquareError(f"pseudo_inverse requires a square matrix, got {s.shape}")
    asym = np.max(np.abs(s - s.T)) if m > 1 else 0.0
    scale = max(np.max(np.abs(s)), 1.0)
    if asym > 1e-8 * scale:
        raise NotSymmetricError(f"matrix asymmetry {asym:.3e} too large for eigen route")
    if policy is None:
        policy = Tolerance(1e-10)

    w, v = np.linalg.eigh((s + s.T) / 2.0)
    order = np.argsort(w)[::-1]
    w = w[order]
    v = v[:, order]

    if isinstance(policy, FixedRank):
        if policy.rank > m:
            raise RankExceedsDimensionError(f"rank {policy.rank} exceeds dimension {m}")
        keep = np.zeros(m, dtype=bool)
        keep[: policy.rank] = True
        floor = _NUMERICAL_ZERO * max(w[0], 0.0)
        zeroed = keep & (w <= floor)
        keep &= w > floor
        rank_deficient = bool(zeroed.any())
    elif isinstance(policy, Tolerance):
        keep = w > policy.rtol * max(w[0], 0.0)
        rank_deficient = False
    else:
        raise TypeError(f"unknown pseudo-inverse policy: {policy!r}")

    inv_w = np.zeros(m)
    inv_w[keep] = 1.0 / w[keep]
    out = (v * inv_w) @ v.T
    if return_info:
        return out, {"rank": int(keep.sum()), "rank_deficient": rank_deficient}
    return out


def orth_complement(v):
    """Orthonormal basis of the complement of a unit vector.

    Uses the Householder reflector that maps ``v`` onto the first coordinate
    axis; columns 2..m of the reflector are returned.  The construction is
    deterministic, so repeated calls give identical bases.
    """
    v = np.asarray(v, dtype=float).ravel()
    m = v.size
    norm = np.linalg.norm(v)
    if norm < 1e-8:
        raise ZeroVectorError("cannot build a complement of a zero vector")
    if abs(norm - 1.0) > SYMMETRY_TOL:
        raise ZeroVectorError(f"vector norm {norm} deviates from 1 beyond tolerance")
    if m == 1:
        return np.zeros((1, 0))
    sign = 1.0 if v[0] >= 0 else -1.0
    u = v.copy()
    u[0] += sign * norm
    h = np.eye(m) - (2.0 / (u @ u)) * np.outer(u, u)
    return h[:, 1:]


def polar_orthogonal(b, what="matrix block"):
    """Orthogonal polar factor (B B')^{-1/2} B of a square invertible matrix.

    Computed from the SVD of ``B`` (the factor is U W' for B = U diag W'),
    which avoids forming or inverting B B'.
    """
    b = _as_matrix(b)
    if b.shape[0] != b.shape[1]:
        raise NonSquareError(f"polar factor requires a square matrix, got {b.shape}")
    if b.shape[0] == 0:
        return b.copy()
    try:
        u, d, wt = np.linalg.svd(b)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailureError(f"SVD failed to converge: {exc}") from exc
    if d[-1] <= 1e-12 * max(d[0], 1.0):
        raise BlockSingularError(f"{what} is numerically singular (min sv {d[-1]:.3e})")
    return u @ wt


def cholesky_lower(s):
    """Lower-triangular Cholesky factor of a symmetric PD matrix."""
    s = _as_matrix(s)
    if s.shape[0] != s.shape[1]:
        raise NonSquareError(f"Cholesky requires a square matrix, got {s.shape}")
    try:
        return np.linalg.cholesky((s + s.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from exc
