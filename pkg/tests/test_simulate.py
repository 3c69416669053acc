import math

import numpy as np
import pytest

from latiso.errors import DataError, SizeGuardError
from latiso.lattice import Grid
from latiso.simulate import (
    AnisoModel,
    ContaminationSpec,
    aniso_distance,
    block_mask,
    contaminate,
    covariance_matrix,
    simulate_grf,
    spherical_gamma,
)
from latiso.variogram import matheron


class TestSpherical:
    def test_examples(self):
        assert spherical_gamma(0.0, 5.0) == 0.0
        assert spherical_gamma(2.5, 5.0) == pytest.approx(0.6875, abs=1e-15)
        assert spherical_gamma(5.0, 5.0, 2.0) == 2.0
        assert spherical_gamma(12.0, 5.0, 2.0) == 2.0

    def test_vectorised(self):
        out = spherical_gamma(np.array([0.0, 1.0, 10.0]), 2.0)
        np.testing.assert_allclose(out, [0.0, 0.6875, 1.0])


class TestAnisoDistance:
    def test_examples(self):
        assert aniso_distance((1, 1), math.pi / 4, 2.0) == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
        assert aniso_distance((0, 1), 0.0, 2.0) == 0.5
        assert aniso_distance((3, 4), 0.0, 1.0) == 5.0

    def test_isotropic_is_euclidean(self, rng):
        h = rng.integers(-6, 7, size=(50, 2))
        for theta in rng.uniform(0, math.pi, 10):
            np.testing.assert_allclose(aniso_distance(h, theta, 1.0), np.hypot(h[:, 0], h[:, 1]), atol=1e-12)

    def test_sign_invariance(self, rng):
        h = rng.integers(-6, 7, size=(50, 2))
        np.testing.assert_allclose(aniso_distance(h, 1.1, 3.0), aniso_distance(-h, 1.1, 3.0), rtol=1e-15)

    def test_model_validation(self):
        for kw in ({"b": 0.5}, {"r": 0.0}, {"beta": -1.0}, {"theta": math.pi}):
            with pytest.raises(DataError):
                AnisoModel(**kw)


class TestCovariance:
    @pytest.mark.parametrize(
        "model", [AnisoModel(), AnisoModel(b=2.0), AnisoModel(math.pi / 4, 2.0), AnisoModel(0.3, 4.0, 3.0, 2.5)]
    )
    def test_diagonal_and_psd(self, model):
        C = covariance_matrix(12, 12, model)
        np.testing.assert_array_equal(np.diag(C), np.full(144, model.beta))
        assert np.linalg.eigvalsh(C).min() >= -1e-8 * model.beta

    def test_beyond_range_is_zero(self):
        C = covariance_matrix(1, 8, AnisoModel(r=3.0))
        assert C[0, 3] == 0.0 and C[0, 7] == 0.0 and C[0, 2] > 0.0

    def test_size_guard(self, monkeypatch):
        with pytest.raises(SizeGuardError):
            covariance_matrix(65, 64, AnisoModel())
        monkeypatch.setenv("LATISO_MAX_GRID", "100")
        with pytest.raises(SizeGuardError):
            covariance_matrix(11, 10, AnisoModel())
        monkeypatch.setenv("LATISO_MAX_GRID", "many")
        with pytest.raises(DataError):
            covariance_matrix(2, 2, AnisoModel())


class TestSimulate:
    def test_deterministic(self):
        a = simulate_grf(10, 12, AnisoModel(b=2.0), 42)
        b = simulate_grf(10, 12, AnisoModel(b=2.0), 42)
        assert a.shape == (10, 12)
        np.testing.assert_array_equal(a.values, b.values)

    def test_nugget_limit(self):
        m = AnisoModel(r=1e-6, beta=1.5)
        est = np.mean([matheron(simulate_grf(12, 12, m, s), (1, 0))[0] for s in range(200)])
        assert est == pytest.approx(2 * 1.5, rel=0.10)

    def test_isotropic_model(self):
        m = AnisoModel(r=5.0)
        ex, ey = np.mean(
            [[matheron(g, (1, 0))[0], matheron(g, (0, 1))[0]] for g in (simulate_grf(16, 16, m, s) for s in range(500))],
            axis=0,
        )
        assert abs(ex - ey) / ey < 0.05

    def test_anisotropic_model_orders_directions(self):
        m = AnisoModel(b=3.0)
        ex, ey = np.mean(
            [[matheron(g, (1, 0))[0], matheron(g, (0, 1))[0]] for g in (simulate_grf(12, 12, m, s) for s in range(100))],
            axis=0,
        )
        # T shrinks the second coordinate, so correlation is longer along y
        assert ex > 1.5 * ey


class TestContamination:
    def test_isolated_count(self, rng):
        g = Grid(np.zeros((24, 24)))
        out = contaminate(g, ContaminationSpec("isolated", 0.1), rng)
        assert out.shape == g.shape
        assert np.count_nonzero(out.values) == 58

    def test_one_outlier(self, rng):
        out = contaminate(Grid(np.zeros((10, 10))), ContaminationSpec("isolated", 1 / 100, mu0=0.0, sigma0=5.0), rng)
        assert np.count_nonzero(out.values) == 1

    def test_none_is_identity(self, rng):
        g = Grid(np.ones((3, 3)))
        assert contaminate(g, None, rng) is g

    def test_square_block(self, rng):
        spec = ContaminationSpec("block", 64 / 576, block_shape="square")
        for _ in range(20):
            m = block_mask((24, 24), spec, rng)
            ys, xs = np.nonzero(m)
            assert m.sum() == 64
            assert (np.ptp(ys) + 1, np.ptp(xs) + 1) == (8, 8)

    @pytest.mark.parametrize("shape", ["random", "square", "elongated"])
    def test_block_count_exact(self, rng, shape):
        for eps in (0.05, 0.1, 0.2, 0.3):
            spec = ContaminationSpec("block", eps, block_shape=shape)
            for _ in range(10):
                out = contaminate(Grid(np.zeros((24, 24))), spec, rng)
                assert np.count_nonzero(out.values) == math.ceil(eps * 576)

    def test_elongated_aspect(self, rng):
        spec = ContaminationSpec("block", 0.1, block_shape="elongated")
        for _ in range(50):
            ys, xs = np.nonzero(block_mask((24, 24), spec, rng))
            h, w = np.ptp(ys) + 1, np.ptp(xs) + 1
            assert max(h, w) / min(h, w) >= 4

    def test_block_contiguous_rectangle_rows(self, rng):
        spec = ContaminationSpec("block", 0.13, block_shape="random")
        for _ in range(30):
            m = block_mask((20, 20), spec, rng)
            ys, xs = np.nonzero(m)
            box = m[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
            # only the last line along the long side may be partial
            assert box.sum() == m.sum() and (box.all(axis=0).sum() >= box.shape[1] - 1 or box.all(axis=1).sum() >= box.shape[0] - 1)

    def test_block_too_large(self, rng):
        with pytest.raises(DataError):
            # ceil(0.49 * 9) = 5 cells on a 3x3 grid
            block_mask((3, 3), ContaminationSpec("block", 0.49), rng)

    def test_spec_validation(self):
        with pytest.raises(DataError):
            ContaminationSpec("cluster", 0.1)
        with pytest.raises(DataError):
            ContaminationSpec("isolated", 0.5)
        with pytest.raises(DataError):
            ContaminationSpec("isolated", 1e-12).count(100)
