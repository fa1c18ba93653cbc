import numpy as np
import pytest

import riskreg as rr
from riskreg.errors import ConvergenceError
from riskreg.linop import as_operator, influence_probe_stats
from riskreg.rng import keyed_rng


class TestSvd:
    def test_identity(self):
        dec = rr.svd(np.eye(4))
        np.testing.assert_allclose(dec.s, np.ones(4))
        assert dec.rank == 4

    def test_diagonal(self):
        dec = rr.svd(np.diag([3.0, 2.0, 1.0]))
        np.testing.assert_allclose(dec.s, [3.0, 2.0, 1.0])

    def test_reconstruction(self):
        rng = keyed_rng(7)
        A = rng.standard_normal((6, 4))
        dec = rr.svd(A)
        R = (dec.U * dec.s) @ dec.V.T
        assert np.linalg.norm(A - R) / np.linalg.norm(A) <= 1e-8

    def test_orthonormality(self, shaw32):
        _, dec = shaw32
        np.testing.assert_allclose(dec.U.T @ dec.U, np.eye(dec.rank), atol=1e-10)
        np.testing.assert_allclose(dec.V.T @ dec.V, np.eye(dec.rank), atol=1e-10)
        assert np.all(np.diff(dec.s) <= 0) and dec.s[-1] > 0

    def test_rank_cutoff(self):
        dec = rr.svd(np.diag([1.0, 1e-5, 1e-14]))
        assert dec.rank == 2

    def test_nonfinite_rejected(self):
        A = np.eye(3)
        A[1, 1] = np.nan
        with pytest.raises(ValueError):
            rr.svd(A)

    def test_matrix_free_rejected(self):
        op = rr.LinearOperator.from_functions(2, 2, lambda x: x, lambda y: y)
        with pytest.raises(ValueError):
            rr.svd(op)


class TestAdjointConsistency:
    def _check(self, op, norm_est, trials=20):
        rng = keyed_rng(13)
        for _ in range(trials):
            x = rng.standard_normal(op.cols)
            y = rng.standard_normal(op.rows)
            gap = abs(op.apply(x) @ y - x @ op.apply_adjoint(y))
            assert gap <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y) * norm_est

    def test_dense_benchmarks(self, benchmarks64):
        for p, dec in benchmarks64:
            self._check(p.A, float(dec.s[0]))

    def test_tomography(self):
        p = rr.parallel_tomo(cells_per_side=12, angles=18, rays_per_angle=17)
        norm_est = np.sqrt(rr.largest_eigenvalue(p.A, seed=1))
        self._check(p.A, norm_est)

    def test_block_apply_matches_columns(self):
        rng = keyed_rng(3)
        A = rng.standard_normal((5, 7))
        op = as_operator(A)
        X = rng.standard_normal((7, 4))
        np.testing.assert_allclose(op.apply(X),
                                   np.column_stack([op.apply(X[:, j]) for j in range(4)]))


class TestPowerMethod:
    def test_diagonal(self):
        assert rr.largest_eigenvalue(np.diag([2.0, 1.0]), seed=0) == pytest.approx(4.0, rel=1e-8)

    def test_identity(self):
        assert rr.largest_eigenvalue(np.eye(5), seed=0) == pytest.approx(1.0, rel=1e-12)

    def test_matches_svd(self, shaw32):
        p, dec = shaw32
        lam = rr.largest_eigenvalue(p.A, tol=1e-10, seed=2)
        assert lam == pytest.approx(float(dec.s[0]) ** 2, rel=1e-6)

    def test_rayleigh_monotone(self):
        rng = keyed_rng(17)
        A = rng.standard_normal((30, 30))
        _, _, _, history = rr.power_iteration(A, tol=1e-12, seed=5)
        h = np.array(history)
        assert np.all(np.diff(h) >= -1e-9 * h[1:])

    def test_nonconvergence_carries_iterate(self):
        # two nearly equal top eigenvalues force slow convergence
        A = np.diag([1.0, 1.0 - 1e-12, 0.5])
        with pytest.raises(ConvergenceError) as err:
            rr.largest_eigenvalue(A, tol=1e-14, max_iter=3, seed=0)
        assert err.value.last_iterate == pytest.approx(1.0, rel=1e-2)


class TestCgNormal:
    def test_matches_direct_solve(self):
        rng = keyed_rng(19)
        A = rng.standard_normal((12, 9))
        b = rng.standard_normal(9)
        alpha = 0.3
        x, _ = rr.cg_normal(A, b, alpha, tol=1e-12)
        x_ref = np.linalg.solve(A.T @ A + alpha * np.eye(9), b)
        np.testing.assert_allclose(x, x_ref, rtol=1e-8)

    def test_block_and_warm_start(self):
        rng = keyed_rng(23)
        A = rng.standard_normal((10, 10))
        B = rng.standard_normal((10, 3))
        X, it1 = rr.cg_normal(A, B, 1.0, tol=1e-10)
        X2, it2 = rr.cg_normal(A, B, 1.0, tol=1e-10, x0=X)
        assert it2 <= 2
        np.testing.assert_allclose(X2, X, rtol=1e-8)

    def test_iteration_cap(self):
        rng = keyed_rng(29)
        A = rng.standard_normal((40, 40))
        b = rng.standard_normal(40)
        with pytest.raises(ConvergenceError):
            rr.cg_normal(A, b, 1e-14, tol=1e-14, max_iter=2)


class TestInfluenceEstimators:
    def test_zero_operator(self):
        Z = np.zeros((6, 4))
        assert rr.frobenius_sq_influence(Z, 1.0, probes=8, seed=0) == 0.0
        assert rr.trace_influence(Z, 1.0, probes=8, seed=0) == 0.0

    def test_identity_closed_form(self):
        # filter value is 1/2 per mode at alpha = 1, so frob -> 8/4, trace -> 8/2
        frob = rr.frobenius_sq_influence(np.eye(8), 1.0, probes=2000, seed=4)
        tr = rr.trace_influence(np.eye(8), 1.0, probes=2000, seed=4)
        assert frob == pytest.approx(2.0, rel=0.05)
        assert tr == pytest.approx(4.0, rel=0.05)

    def test_matches_svd_on_shaw(self, shaw64):
        p, dec = shaw64
        alpha = 1e-3
        s2 = dec.s ** 2
        frob_exact = float(np.sum((s2 / (s2 + alpha)) ** 2))
        tr_exact = float(np.sum(s2 / (s2 + alpha)))
        assert rr.frobenius_sq_influence(p.A, alpha, 200, seed=0) == pytest.approx(
            frob_exact, rel=0.05)
        assert rr.trace_influence(p.A, alpha, 200, seed=0) == pytest.approx(
            tr_exact, rel=0.05)

    def test_deterministic_given_seed(self):
        rng = keyed_rng(31)
        A = rng.standard_normal((9, 9))
        a = rr.frobenius_sq_influence(A, 0.5, probes=16, seed=42)
        b = rr.frobenius_sq_influence(A, 0.5, probes=16, seed=42)
        assert a == b
        assert a != rr.frobenius_sq_influence(A, 0.5, probes=16, seed=43)

    def test_rademacher_probes(self):
        frob = rr.frobenius_sq_influence(np.eye(8), 1.0, probes=500, seed=6,
                                         distribution="rademacher")
        assert frob == pytest.approx(2.0, rel=0.1)

    @pytest.mark.parametrize("alpha", [1e-4, 1e-2, 1.0])
    def test_unbiased_over_seeds(self, shaw32, alpha):
        p, dec = shaw32
        s2 = dec.s ** 2
        frob_exact = float(np.sum((s2 / (s2 + alpha)) ** 2))
        tr_exact = float(np.sum(s2 / (s2 + alpha)))
        frobs, traces = [], []
        for seed in range(50):
            stats = influence_probe_stats(p.A, alpha, probes=20, seed=seed)
            frobs.append(stats["frob_sq"])
            traces.append(stats["trace"])
        for samples, exact in ((frobs, frob_exact), (traces, tr_exact)):
            samples = np.array(samples)
            se = samples.std(ddof=1) / np.sqrt(samples.size)
            assert abs(samples.mean() - exact) <= 3.0 * se
