import numpy as np
import pytest
from scipy.special import roots_laguerre

import riskreg as rr
from riskreg.problems import (_laguerre_nodes_logweights, head_phantom,
                              load_container, noisy_from_container,
                              problem_from_container, save_container)
from riskreg.rng import keyed_rng


class TestGenerators:
    def test_consistency_and_nonzero(self, benchmarks64):
        for p, _ in benchmarks64:
            assert np.linalg.norm(p.g_true - p.A.apply(p.f_true)) <= \
                1e-10 * np.linalg.norm(p.g_true)
            assert np.any(p.f_true) and np.any(p.g_true)

    def test_shaw_symmetric(self):
        A = rr.make_problem("shaw", None, 64).A.to_dense()
        assert np.linalg.norm(A - A.T) <= 1e-12 * np.linalg.norm(A)

    def test_deriv2_quadratic_decay(self):
        dec = rr.svd(rr.make_problem("deriv2", None, 64).A)
        for i in (4, 6, 8, 12):
            ratio = dec.s[2 * i - 1] / dec.s[i - 1]
            assert 0.15 <= ratio <= 0.35

    def test_conditioning(self, benchmarks64):
        for p, dec in benchmarks64:
            cond = dec.s[0] / dec.s[-1]
            if p.name == "heat" and p.variant == 5:
                assert cond < 50            # almost well posed
            else:
                assert cond > 1e3

    def test_unknown_names_rejected(self):
        with pytest.raises(ValueError):
            rr.make_problem("unknown", None, 32)
        with pytest.raises(ValueError):
            rr.make_problem("heat", 3, 32)
        with pytest.raises(ValueError):
            rr.make_problem("i_laplace", 4, 32)
        with pytest.raises(ValueError):
            rr.make_problem("shaw", 1, 32)

    def test_pure_function_of_inputs(self):
        a = rr.make_problem("gravity", None, 32)
        b = rr.make_problem("gravity", None, 32)
        assert np.array_equal(a.A.to_dense(), b.A.to_dense())
        assert np.array_equal(a.f_true, b.f_true)

    def test_laguerre_rule_matches_scipy(self):
        for n in (8, 16, 32):
            t, logw = _laguerre_nodes_logweights(n)
            ts, ws = roots_laguerre(n)
            np.testing.assert_allclose(t, ts, rtol=1e-12)
            keep = ws > 1e-280
            np.testing.assert_allclose(logw[keep], np.log(ws[keep]) + ts[keep],
                                       atol=1e-10)


class TestNoise:
    def test_snr_inversion(self):
        p = rr.make_problem("shaw", None, 64)
        d = rr.add_noise(p, 0.0, seed=1)
        rho2 = float(p.g_true @ p.g_true)
        assert rho2 / (64 * d.sigma ** 2) == pytest.approx(1.0)
        assert rr.snr_db(rho2, d.sigma ** 2, 64) == pytest.approx(0.0, abs=1e-12)

    def test_empirical_variance(self):
        p = rr.make_problem("gravity", None, 1024)
        d = rr.add_noise(p, 10.0, seed=9)
        eta4 = np.concatenate([rr.add_noise(p, 10.0, 9, rep).g - p.g_true
                               for rep in range(4)])
        assert np.var(eta4) == pytest.approx(d.sigma ** 2, rel=0.05)

    def test_bitwise_reproducible(self):
        p = rr.make_problem("phillips", None, 64)
        a = rr.add_noise(p, 20.0, seed=5, replicate=3)
        b = rr.add_noise(p, 20.0, seed=5, replicate=3)
        assert np.array_equal(a.g, b.g)
        c = rr.add_noise(p, 20.0, seed=5, replicate=4)
        assert not np.array_equal(a.g, c.g)

    def test_isotropy(self):
        # off-diagonal correlations average to zero across replicates
        p = rr.make_problem("deriv2", None, 1024)
        etas = np.stack([rr.add_noise(p, 10.0, 7, rep).g - p.g_true
                         for rep in range(50)])
        cols = keyed_rng(77).choice(1024, size=40, replace=False)
        corr = np.corrcoef(etas[:, cols], rowvar=False)
        off = corr[~np.eye(40, dtype=bool)]
        assert abs(off.mean()) <= 0.1


class TestTomography:
    def test_single_horizontal_ray(self):
        p = rr.parallel_tomo(cells_per_side=8, angles=1, rays_per_angle=1)
        proj = p.A.apply(np.ones(64))
        assert proj[0] == pytest.approx(8.0, abs=1e-10)

    def test_row_sums_match_chord_lengths(self):
        ell, angles, rays = 10, 12, 15
        p = rr.parallel_tomo(cells_per_side=ell, angles=angles, rays_per_angle=rays)
        row_sums = p.A.apply(np.ones(ell * ell))
        # independent oracle: clip each ray against the square with Liang-Barsky
        span = np.sqrt(2.0) * ell
        offsets = np.linspace(-span / 2, span / 2, rays)
        k = 0
        for a in range(angles):
            th = np.deg2rad(a * 180.0 / angles)
            u = np.array([np.cos(th), np.sin(th)])
            c = offsets[:, None] * np.array([-np.sin(th), np.cos(th)])[None, :]
            for r in range(rays):
                t_lo, t_hi = -np.inf, np.inf
                for axis in range(2):
                    if abs(u[axis]) > 1e-14:
                        t1 = (-ell / 2 - c[r, axis]) / u[axis]
                        t2 = (ell / 2 - c[r, axis]) / u[axis]
                        t_lo = max(t_lo, min(t1, t2))
                        t_hi = min(t_hi, max(t1, t2))
                    elif abs(c[r, axis]) > ell / 2:
                        t_lo, t_hi = 0.0, 0.0
                chord = max(t_hi - t_lo, 0.0)
                assert row_sums[k] == pytest.approx(chord, abs=1e-10)
                k += 1

    def test_degenerate_geometry_rejected(self):
        with pytest.raises(ValueError):
            rr.parallel_tomo(cells_per_side=8, angles=0, rays_per_angle=5)

    def test_phantom_and_consistency(self):
        p = rr.parallel_tomo(cells_per_side=16, angles=10, rays_per_angle=12)
        assert np.any(p.f_true > 0)
        assert np.linalg.norm(p.g_true - p.A.apply(p.f_true)) <= \
            1e-10 * np.linalg.norm(p.g_true)

    def test_phantom_is_centered_head(self):
        img = head_phantom(64).reshape(64, 64)
        assert img[32, 32] > 0          # inside the big ellipse
        assert img[0, 0] == 0.0         # corners empty


class TestContainers:
    def test_problem_round_trip(self, tmp_path):
        p = rr.make_problem("foxgood", None, 32)
        path = tmp_path / "problem.rr"
        save_container(path, problem=p)
        raw = load_container(path)
        q = problem_from_container(raw)
        assert raw["name"] == "foxgood" and raw["n"] == 32 and raw["m"] == 32
        assert np.array_equal(q.A.to_dense(), p.A.to_dense())
        assert np.array_equal(q.f_true, p.f_true)
        assert np.array_equal(q.g_true, p.g_true)

    def test_noisy_round_trip(self, tmp_path):
        p = rr.make_problem("shaw", None, 16)
        d = rr.add_noise(p, 20.0, seed=3, replicate=1)
        path = tmp_path / "data.rr"
        save_container(path, problem=p, noisy=d)
        raw = load_container(path)
        d2 = noisy_from_container(raw)
        assert np.array_equal(d2.g, d.g)
        assert d2.sigma == d.sigma and d2.xi == d.xi
        assert d2.seed == 3 and d2.replicate == 1

    def test_matrix_is_column_major_float64(self, tmp_path):
        p = rr.make_problem("deriv2", None, 16)
        path = tmp_path / "p.rr"
        save_container(path, problem=p)
        import json
        with open(path, "rb") as fh:
            assert fh.read(8) == b"RISKREG1"
            (length,) = np.frombuffer(fh.read(8), dtype="<u8")
            header = json.loads(fh.read(int(length)))
            sec = header["sections"][0]
            assert sec["field"] == "A" and sec["order"] == "F"
            A = np.frombuffer(fh.read(8 * 16 * 16), dtype="<f8").reshape(
                (16, 16), order="F")
        np.testing.assert_array_equal(A, p.A.to_dense())

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "bogus.rr"
        path.write_bytes(b"NOTRISKREG")
        with pytest.raises(ValueError):
            load_container(path)
