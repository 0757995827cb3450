import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import kurtosis

from kmv.data import SnapshotPair, pairs_from_trajectory
from kmv.dictionaries import assemble, assemble_features, fourier_dictionary, linear_dictionary, rbf_dictionary
from kmv.errors import KmvWarning, NumericalError, PreconditionError, RankError
from kmv.experiments import lorenz_series
from kmv.galerkin import (
    eig_order,
    edmd,
    hankel_dmd,
    havok,
    invariant_level_set,
    kmd_expand,
    log_scale_eigs,
)
from kmv.numerics import match_eigenvalues
from kmv.regression import exact_dmd

from conftest import circle_mats


class TestEdmd:
    def test_transpose_of_dmd_matrix(self, rng):
        X, Y = rng.standard_normal((4, 30)), rng.standard_normal((4, 30))
        res = edmd(assemble(SnapshotPair(X, Y), linear_dictionary(4)))
        np.testing.assert_allclose(res.K, (Y @ np.linalg.pinv(X)).T, atol=1e-10)
        assert match_eigenvalues(res.eigenvalues, exact_dmd((X, Y), 4).eigenvalues) <= 1e-10

    def test_circle_rotation_diagonal(self):
        res = edmd(circle_mats(alpha=0.7, K=5))
        np.testing.assert_allclose(res.K, np.diag(np.exp(0.7j * np.arange(-5, 6))), atol=1e-10)

    def test_identity_dynamics(self, rng):
        X = rng.standard_normal((3, 20))
        res = edmd(assemble(SnapshotPair(X, X), linear_dictionary(3)))
        np.testing.assert_allclose(res.K, np.eye(3), atol=1e-12)

    def test_eigen_relation(self, rng):
        PX, PY = rng.standard_normal((40, 6)), rng.standard_normal((40, 6))
        res = edmd(assemble_features(PX, PY))
        np.testing.assert_allclose(res.K @ res.right_vectors, res.right_vectors * res.eigenvalues, atol=1e-10)

    def test_rank_policy(self, rng):
        PX = rng.standard_normal((20, 3))
        PX = np.column_stack([PX, PX[:, 0] + PX[:, 1]])
        with pytest.raises(RankError, match="at most 3"):
            edmd(assemble_features(PX, PX), rank_policy="error")
        assert edmd(assemble_features(PX, PX)).rank == 3

    def test_koopman_modes_reconstruct_state(self, rng):
        X = rng.standard_normal((2, 50))
        res = edmd(assemble(SnapshotPair(X, 0.5 * X), linear_dictionary(2)))
        recon = res.mats.PsiX @ res.right_vectors @ res.koopman_modes
        np.testing.assert_allclose(recon, X.T, atol=1e-10)

    def test_galerkin_rate(self):
        # equispaced quadrature of trigonometric polynomials is exact once M > 2K
        for M in (11, 40, 160):
            mats = circle_mats(M=M, alpha=0.3, K=5)
            np.testing.assert_allclose(mats.G, np.eye(11), atol=1e-12)
            np.testing.assert_allclose(mats.A, np.diag(np.exp(0.3j * np.arange(-5, 6))), atol=1e-12)

    def test_galerkin_rate_random_nodes(self):
        errs = []
        for M in (500, 2000, 8000):
            theta = np.random.default_rng(M).uniform(0, 2 * np.pi, M)
            mats = assemble(SnapshotPair(theta[None, :], theta[None, :] + 0.3), fourier_dictionary(2))
            errs.append(np.abs(mats.G - np.eye(5)).max())
        assert errs[2] < errs[0]


class TestKmdExpand:
    def test_first_dictionary_element(self, rng):
        PX, PY = rng.standard_normal((30, 4)), rng.standard_normal((30, 4))
        res = edmd(assemble_features(PX, PY))
        np.testing.assert_allclose(kmd_expand(res, PX[:, 0]), np.linalg.solve(res.right_vectors, np.eye(4)[:, 0]),
                                   atol=1e-10)

    def test_rotation_eigenfunction(self):
        mats = circle_mats(alpha=0.7, K=5)
        res = edmd(mats)
        c = kmd_expand(res, np.exp(2j * mats.X[0]))
        k = int(np.argmax(np.abs(c)))
        assert abs(res.eigenvalues[k] - np.exp(1.4j)) <= 1e-10
        assert np.all(np.abs(np.delete(c, k)) <= 1e-8)

    def test_zero(self):
        res = edmd(circle_mats())
        np.testing.assert_array_equal(kmd_expand(res, np.zeros(256)), np.zeros(11))


class TestInvariantLevelSet:
    def test_two_basins(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-2, 2, (1, 2000))
        y = np.sign(x) * (1 + 0.5 * (np.abs(x) - 1))
        res = edmd(assemble(SnapshotPair(x, y), rbf_dictionary(x, 30, seed=0)))
        mask, values = invariant_level_set(res, 0.5)
        agree = np.mean(mask == (x[0] > 0))
        assert max(agree, 1 - agree) >= 0.98
        assert values.min() == 0.0 and values.max() == 1.0

    def test_no_unit_eigenvalue(self, rng):
        X = rng.standard_normal((2, 20))
        res = edmd(assemble(SnapshotPair(X, 0.5 * X), linear_dictionary(2)))
        with pytest.raises(NumericalError):
            invariant_level_set(res, 0.5)


class TestHankelDmd:
    def test_cosine(self):
        g = np.cos(0.4 * np.arange(60))
        res = hankel_dmd(g, 4, 2)
        assert match_eigenvalues(res.eigenvalues, np.exp([0.4j, -0.4j])) <= 1e-8

    def test_constant(self):
        np.testing.assert_allclose(hankel_dmd(np.full(30, 2.0), 3, 1).eigenvalues, [1.0], atol=1e-12)

    def test_two_tones(self):
        w1, w2 = 0.3, 0.3 * np.sqrt(2)
        n = np.arange(300)
        res = hankel_dmd(np.cos(w1 * n) + 0.5 * np.sin(w2 * n), 10, 4)
        truth = np.exp(1j * np.array([w1, -w1, w2, -w2]))
        assert match_eigenvalues(res.eigenvalues, truth) <= 1e-6
        assert np.max(np.abs(np.abs(res.eigenvalues) - 1)) <= 1e-4


class TestHavok:
    def test_closed_linear_has_no_forcing(self):
        t = 0.1 * np.arange(400)
        m = havok(np.cos(1.3 * t), 20, 3, 0.1)
        forcing = np.linalg.norm(m.coordinates[:, 2:] @ m.B_force.T)
        linear = np.linalg.norm(m.coordinates[:, :2] @ m.K_lin.T)
        assert forcing <= 0.01 * linear

    def test_zero_series(self):
        m = havok(np.zeros(200), 10, 3, 0.1)
        assert not np.any(m.K_lin) and not np.any(m.B_force) and not np.any(m.v_r_series)

    def test_shapes(self):
        m = havok(np.sin(0.2 * np.arange(300)) + 0.1 * np.cos(0.05 * np.arange(300)), 12, 5, 0.05)
        assert m.K_lin.shape == (4, 4) and m.B_force.shape == (4, 1) and m.v_r_series.shape == (288,)

    def test_precondition(self):
        with pytest.raises(PreconditionError):
            havok(np.ones(50), 5, 1, 0.1)

    @pytest.mark.slow
    def test_lorenz_heavy_tails(self):
        x = lorenz_series(0.01, 20_000 + 100, 1000, 10)[0]
        m = havok(x, 100, 15, 0.01)
        assert kurtosis(m.v_r_series) > 1


class TestLogScale:
    def test_unit(self):
        assert log_scale_eigs([1.0], 0.1)[0] == 0

    def test_inverse_of_exp(self):
        eta = -0.2 + 2j
        np.testing.assert_allclose(log_scale_eigs([np.exp(eta * 0.1)], 0.1), [eta], atol=1e-12)

    def test_zero_excluded(self):
        with pytest.warns(KmvWarning):
            out = log_scale_eigs([0.0, 0.5], 1.0)
        assert out.size == 1

    @given(st.floats(0.1, 2.0), st.floats(-3.0, 3.0))
    def test_conjugate_pairs(self, r, th):
        lam = r * np.exp(1j * th)
        a, b = log_scale_eigs([lam, np.conj(lam)], 0.5)
        assert abs(a - np.conj(b)) <= 1e-12


class TestEigOrder:
    def test_order(self):
        lam = np.array([0.5, 1j, -1j, 0.9, -1.0])
        np.testing.assert_array_equal(lam[eig_order(lam)], [1j, -1j, -1.0, 0.9, 0.5])
