import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from kmv.data import SnapshotPair, pairs_from_ensemble
from kmv.dictionaries import (
    assemble,
    assemble_features,
    fourier_dictionary,
    linear_dictionary,
    rbf_dictionary,
    rbf_from_centers,
    rbf_scale,
)
from kmv.errors import InputError, NumericalError
from kmv.systems import duffing, sample_ensemble


def circle_pair(M, alpha):
    theta = 2 * np.pi * np.arange(M) / M
    return SnapshotPair(theta[None, :], (theta + alpha)[None, :])


class TestLinearDictionary:
    def test_eval(self):
        dic = linear_dictionary(2)
        np.testing.assert_array_equal(dic(np.array([2.0, 3.0])), [2.0, 3.0])
        assert dic.N == 2

    def test_features_are_transpose(self, rng):
        X = rng.standard_normal((3, 6))
        mats = assemble(SnapshotPair(X, 2 * X), linear_dictionary(3))
        np.testing.assert_array_equal(mats.PsiX, X.T)


class TestRbf:
    def test_center_feature(self, rng):
        C = rng.standard_normal((4, 2))
        dic = rbf_from_centers(C, 0.7)
        assert dic(C[2])[2] == 1.0

    def test_unsquared_distance(self):
        dic = rbf_from_centers(np.zeros((1, 2)), 2.0)
        np.testing.assert_allclose(dic(np.array([3.0, 4.0])), [np.exp(-10.0)])

    def test_unit_sphere_scale(self, rng):
        S = rng.standard_normal((3, 200))
        S /= np.linalg.norm(S, axis=0)
        S = np.hstack([S, -S])  # mean exactly zero
        assert rbf_scale(S) == pytest.approx(1.0, rel=1e-12)

    def test_degenerate(self):
        with pytest.raises(InputError):
            rbf_scale(np.ones((2, 5)))

    def test_duffing_features_bounded(self):
        init = np.random.default_rng(0).uniform(-2, 2, (2, 1000))
        pair = pairs_from_ensemble(sample_ensemble(duffing(), init, 0.25, 50, substeps=2))
        dic = rbf_dictionary(pair.X[:, ::25], 100, seed=0, n_init=1)
        P = dic.evaluate(pair.X[:, :5000])
        assert np.all(np.isfinite(P))
        assert P.max() <= 1.0 and P.min() > 0

    def test_too_few_samples(self, rng):
        from kmv.errors import DimensionError
        with pytest.raises(DimensionError):
            rbf_dictionary(rng.standard_normal((2, 3)), 5)


class TestFourier:
    def test_constant(self):
        dic = fourier_dictionary(0)
        np.testing.assert_array_equal(dic(np.array([1.3])), [1.0])

    def test_zero_angle(self):
        np.testing.assert_array_equal(fourier_dictionary(3)(np.array([0.0])), np.ones(7))

    def test_discrete_orthogonality(self):
        mats = assemble(circle_pair(512, 0.4), fourier_dictionary(6))
        assert np.max(np.abs(mats.G - np.eye(13))) <= 1e-12

    def test_gram_order_one_over_m(self):
        theta = np.random.default_rng(1).uniform(0, 2 * np.pi, 4000)
        mats = assemble(SnapshotPair(theta[None, :], theta[None, :]), fourier_dictionary(2))
        assert np.max(np.abs(mats.G - np.eye(5))) <= 5 / np.sqrt(4000)


class TestAssemble:
    def test_single_sample(self, rng):
        x = rng.standard_normal((2, 1))
        dic = rbf_from_centers(rng.standard_normal((3, 2)), 1.0)
        mats = assemble(SnapshotPair(x, x, [1.0]), dic)
        psi = dic(x[:, 0])
        np.testing.assert_allclose(mats.G, np.outer(psi, psi))

    def test_correlations(self, rng):
        PX = rng.standard_normal((9, 4)) + 1j * rng.standard_normal((9, 4))
        PY = rng.standard_normal((9, 4)) + 1j * rng.standard_normal((9, 4))
        w = rng.uniform(size=9)
        mats = assemble_features(PX, PY, w)
        np.testing.assert_allclose(mats.A, PX.conj().T @ np.diag(w) @ PY)
        np.testing.assert_allclose(mats.L, PY.conj().T @ np.diag(w) @ PY)

    def test_non_finite_names_indices(self):
        PX = np.ones((3, 2))
        PX[1, 0] = np.inf
        with pytest.raises(NumericalError, match="observable 0, sample 1"):
            assemble_features(PX, np.ones((3, 2)))

    def test_isometry_traces(self):
        mats = assemble(circle_pair(256, 0.9), fourier_dictionary(4))
        assert np.trace(mats.G).real == pytest.approx(np.trace(mats.L).real, rel=1e-12)

    @given(arrays(float, (6, 3), elements=st.floats(-3, 3)),
           arrays(float, (6, 3), elements=st.floats(-3, 3)),
           arrays(float, 6, elements=st.floats(0, 1)))
    def test_hermitian_psd_and_linear_in_weights(self, PX, PY, w):
        m1 = assemble_features(PX, PY, w)
        m2 = assemble_features(PX, PY, 2 * w)
        for H in (m1.G, m1.L):
            np.testing.assert_array_equal(H, H.conj().T)
            assert np.linalg.eigvalsh(H).min() >= -1e-12 * max(1.0, np.abs(H).max())
        for a, b in ((m1.G, m2.G), (m1.A, m2.A), (m1.L, m2.L)):
            np.testing.assert_allclose(b, 2 * a, rtol=1e-14, atol=1e-300)
