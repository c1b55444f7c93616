"""Shared fixtures and independent oracles used across the test suite."""

import math

import numpy as np
import pytest
from scipy import integrate


def als_rank_one(matrix, sweeps=400, restarts=4, seed=12345):
    """Rank-one Frobenius fit by alternating least squares.

    Independent of any SVD routine: alternately solves the two linear
    least-squares subproblems for u and v in ``min ||M - u v'||_F``.
    Restarts from several random initializations and keeps the best fit.

    Returns (u, v, residual_norm).
    """
    rng = np.random.default_rng(seed)
    best = None
    for attempt in range(restarts):
        if attempt == 0:
            v = np.ones(matrix.shape[1])
        else:
            v = rng.standard_normal(matrix.shape[1])
        u = np.zeros(matrix.shape[0])
        for _ in range(sweeps):
            denom = v @ v
            if denom == 0:
                break
            u = matrix @ v / denom
            denom = u @ u
            if denom == 0:
                break
            v = matrix.T @ u / denom
        resid = np.linalg.norm(matrix - np.outer(u, v))
        if best is None or resid < best[2]:
            best = (u, v, resid)
    return best


def chi2_cdf_quadrature(x, df):
    """Central chi-square CDF by adaptive quadrature of the density."""
    if x <= 0:
        return 0.0

    half = df / 2.0
    log_norm = half * math.log(2.0) + math.lgamma(half)

    def density(t):
        return math.exp((half - 1.0) * math.log(t) - t / 2.0 - log_norm)

    value, _ = integrate.quad(density, 0.0, x, epsabs=1e-13, epsrel=1e-13, limit=400)
    return value


def random_spd(rng, dim, jitter=0.5):
    """Well-conditioned random symmetric positive definite matrix."""
    a = rng.standard_normal((dim, dim))
    return a @ a.T / dim + jitter * np.eye(dim)


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
