import math

import numpy as np
import pytest

from kpstest import linalg as la
from kpstest.distributions import Chi2Spec, RngStream, chi2_quantile, noncentral_chi2_cdf
from kpstest.exceptions import DimensionError, SigmaOutOfRangeError
from kpstest.montecarlo import (
    PowerExperiment,
    SizeExperiment,
    TABLE_POW4_GRID,
    TABLE_POW16_3_GRID,
    dgp_local,
    dgp_null,
    gaussian_moment_covariance,
    local_bc,
    local_noncentrality,
    paper_table,
    run_power,
    run_size,
    sample_size_rule,
)


class TestDgpNull:
    def test_homoskedastic_moments(self):
        s = dgp_null(2, 3, 60_000, "homoskedastic", RngStream(1, 0))
        assert s.vhat.shape == (60_000, 2)
        assert s.z.shape == (60_000, 3)
        cov_v = s.vhat.T @ s.vhat / 60_000
        assert np.max(np.abs(cov_v - np.eye(2))) < 0.03
        cov_z = s.z.T @ s.z / 60_000
        assert np.max(np.abs(cov_z - np.eye(3))) < 0.03

    def test_scalar_hetero_unconditional_variance(self):
        s = dgp_null(3, 2, 200_000, "scalar-hetero", RngStream(2, 0))
        assert np.max(np.abs(np.var(s.vhat, axis=0) - 1.0)) < 0.03

    @pytest.mark.parametrize("variant", ["homoskedastic", "scalar-hetero"])
    def test_population_moment_matrix_factors(self, variant):
        # second moments of f = V kron Z approach a Kronecker product
        s = dgp_null(2, 2, 150_000, variant, RngStream(3, 1))
        f = (s.vhat[:, :, None] * s.z[:, None, :]).reshape(-1, 4)
        r = f.T @ f / f.shape[0]
        m = la.rearrange(r, 2, 2)
        sv = np.linalg.svd(m, compute_uv=False)
        assert sv[1] / sv[0] < 0.02

    def test_determinism(self):
        a = dgp_null(2, 2, 50, "homoskedastic", RngStream(5, 9))
        b = dgp_null(2, 2, 50, "homoskedastic", RngStream(5, 9))
        assert np.array_equal(a.vhat, b.vhat) and np.array_equal(a.z, b.z)


class TestDgpLocal:
    def test_sigma_zero_is_exact_null(self):
        b, c = local_bc(0.0, 500)
        assert b == 1.0 and c == 1.0

    def test_bc_identities(self):
        n, sigma = 10_000, 4.0
        b, c = local_bc(sigma, n)
        s = sigma / math.sqrt(n)
        assert abs(b + c - (2 + s)) < 1e-12
        assert abs(b * c - (1 - s)) < 1e-12

    def test_population_moment_matrix(self):
        n, sigma = 160_000, 5.0
        s = dgp_local(n, sigma, RngStream(4, 2))
        f = (s.vhat[:, :, None] * s.z[:, None, :]).reshape(-1, 4)
        r = np.diag(f.T @ f / n)
        b, c = local_bc(sigma, n)
        expected = np.array([(b + c) / 2, (1 + b * c) / 2, (1 + b * c) / 2, (b + c) / 2])
        assert np.max(np.abs(r - expected)) < 0.02
        # equivalently I + (sigma / (2 sqrt n)) diag(1,-1,-1,1)
        dev = sigma / (2 * math.sqrt(n))
        assert np.max(np.abs(expected - (1 + dev * np.array([1, -1, -1, 1])))) < 1e-12

    def test_sigma_out_of_range(self):
        with pytest.raises(SigmaOutOfRangeError):
            dgp_local(100, 10.0, RngStream(0, 0))


class TestSampleSizeRule:
    @pytest.mark.parametrize("p,k,n", TABLE_POW16_3_GRID)
    def test_pow16_3_matches_grid(self, p, k, n):
        assert sample_size_rule(p, k, "pow16-3") == n

    @pytest.mark.parametrize("p,k,n", TABLE_POW4_GRID)
    def test_pow4_matches_grid(self, p, k, n):
        assert sample_size_rule(p, k, "pow4") == n


class TestRunSize:
    def test_single_rep_degenerate(self):
        exp = SizeExperiment(p=2, k=2, n=64, reps=1, seed=3)
        table = run_size(exp)
        assert set(table["nrp_pct"]) <= {0.0, 100.0}

    def test_columns_and_values(self):
        exp = SizeExperiment(p=2, k=3, n=300, reps=8, seed=1)
        table = run_size(exp)
        assert list(table.columns) == [
            "p",
            "k",
            "n",
            "df",
            "m",
            "level",
            "nrp_pct",
            "mc_se_pct",
            "dgp",
        ]
        assert (table["df"] == 10).all()
        assert (table["m"] == 18).all()
        assert (table["n"] == 300).all()
        expected_se = 100 * math.sqrt(0.05 * 0.95 / 8)
        row = table[table["level"] == 0.05].iloc[0]
        assert abs(row["mc_se_pct"] - expected_se) < 1e-12

    def test_deterministic_and_worker_invariant(self):
        exp = SizeExperiment(p=2, k=2, n=128, reps=60, seed=42)
        t1 = run_size(exp, workers=1)
        t2 = run_size(exp, workers=1)
        t3 = run_size(exp, workers=2)
        assert t1.equals(t2)
        assert t1.equals(t3)

    def test_rule_resolution(self):
        exp = SizeExperiment(p=2, k=2, n_rule="pow4", reps=1, seed=0)
        assert exp.resolved_n() == 256

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            SizeExperiment(p=1, k=3, n=100)


class TestRunPower:
    def test_schema_and_overlay(self):
        exp = PowerExperiment(n=400, sigma_grid=(0.0, 2.0), reps=25, seed=9)
        table = run_power(exp)
        assert list(table.columns) == [
            "sigma",
            "level",
            "power_kpst",
            "power_kpst_star",
            "power_asymptotic",
            "mc_se",
        ]
        assert len(table) == 6
        for _, row in table.iterrows():
            thr = chi2_quantile(1 - row["level"], 4)
            expected = 1.0 - noncentral_chi2_cdf(
                thr, Chi2Spec(4, local_noncentrality(row["sigma"]))
            )
            assert abs(row["power_asymptotic"] - expected) < 1e-12
        at_zero = table[table["sigma"] == 0.0]
        assert np.allclose(at_zero["power_asymptotic"], at_zero["level"], atol=1e-12)

    def test_overlay_monotone_in_sigma(self):
        exp = PowerExperiment(n=400, sigma_grid=(0.0, 1.0, 2.0, 4.0), reps=1, seed=0)
        table = run_power(exp)
        for level in (0.10, 0.05, 0.01):
            vals = table[table["level"] == level].sort_values("sigma")["power_asymptotic"]
            assert np.all(np.diff(vals) > 0)

    def test_deterministic_and_worker_invariant(self):
        exp = PowerExperiment(n=300, sigma_grid=(0.0, 3.0), reps=30, seed=17)
        t1 = run_power(exp, workers=1)
        t2 = run_power(exp, workers=2)
        assert t1.equals(t2)

    def test_star_column_optional(self):
        exp = PowerExperiment(n=300, sigma_grid=(1.0,), reps=5, seed=2, include_star=False)
        table = run_power(exp)
        assert table["power_kpst_star"].isna().all()


class TestPaperTable:
    def test_grid_layout_preset_one(self):
        table = paper_table(1, reps=2, seed=1)
        assert len(table) == len(TABLE_POW16_3_GRID)
        assert list(table.columns[:5]) == ["p", "k", "n", "a", "m"]
        assert list(table["n"]) == [n for _, _, n in TABLE_POW16_3_GRID]
        assert list(table["a"]) == [4, 10, 18, 28, 10, 25]
        assert list(table["m"]) == [9, 18, 30, 45, 18, 36]
        value_cols = [c for c in table.columns if c.startswith(("homo_", "hetero_"))]
        assert len(value_cols) == 6


class TestGaussianMomentCovariance:
    def test_matches_simulated_fourth_moments(self):
        v_rstar = gaussian_moment_covariance(2, 2)
        rng = np.random.default_rng(77)
        n = 400_000
        v = rng.standard_normal((n, 2))
        z = rng.standard_normal((n, 2))
        a = np.stack([v[:, 0] ** 2, v[:, 0] * v[:, 1], v[:, 1] ** 2], axis=1)
        b = np.stack([z[:, 0] ** 2, z[:, 0] * z[:, 1], z[:, 1] ** 2], axis=1)
        w = (b[:, :, None] * a[:, None, :]).reshape(n, 9)
        sim = w.T @ w / n - np.outer(w.mean(0), w.mean(0))
        # entries involve eighth moments (population variance up to ~1.1e4),
        # so per-entry sampling error is ~0.17; allow a wide band
        assert np.max(np.abs(sim - v_rstar)) < 0.8

    def test_known_block_p2(self):
        # E[vech(VV') vech(VV')'] for a bivariate standard normal
        v_rstar = gaussian_moment_covariance(2, 2)
        fourth = np.array([[3.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 3.0]])
        mean = np.array([1.0, 0.0, 1.0])
        expected = np.kron(fourth, fourth) - np.kron(np.outer(mean, mean), np.outer(mean, mean))
        assert np.allclose(v_rstar, expected)
