import warnings
from itertools import combinations

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from kmv.errors import BranchError, DimensionError, InputError, PreconditionError, RankError
from kmv.numerics import (
    cosamp,
    economy_qr,
    eig,
    kmeans,
    match_eigenvalues,
    pinv,
    principal_sqrtm,
    smallest_singular_pair,
    truncated_svd,
    unitary_eig,
)

from conftest import random_unitary, rotation

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestTruncatedSvd:
    def test_identity(self):
        res = truncated_svd(np.eye(4), 4)
        np.testing.assert_allclose(res.S, np.ones(4))

    def test_rank_one(self, rng):
        u = rng.standard_normal(5)
        v = rng.standard_normal(3)
        u *= 2 / np.linalg.norm(u)
        v *= 3 / np.linalg.norm(v)
        res = truncated_svd(np.outer(u, v), 1)
        np.testing.assert_allclose(res.S, [6.0])

    def test_matches_gram_eigenvalues(self, rng):
        A = rng.standard_normal((6, 4))
        res = truncated_svd(A, 4)
        oracle = np.sqrt(np.linalg.eigvalsh(A.T @ A))[::-1]
        np.testing.assert_allclose(res.S, oracle, rtol=1e-10)

    def test_orthonormal_factors(self, rng):
        A = rng.standard_normal((7, 5)) + 1j * rng.standard_normal((7, 5))
        U, S, V = truncated_svd(A, 3)
        np.testing.assert_allclose(U.conj().T @ U, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(V.conj().T @ V, np.eye(3), atol=1e-12)
        assert np.all(np.diff(S) <= 0)

    def test_rank_out_of_range(self):
        with pytest.raises(DimensionError):
            truncated_svd(np.eye(3), 4)

    def test_non_finite(self):
        with pytest.raises(InputError):
            truncated_svd(np.array([[1.0, np.nan], [0.0, 1.0]]), 1)

    @given(arrays(float, (6, 4), elements=finite), st.integers(1, 3))
    def test_eckart_young(self, A, r):
        s = np.linalg.svd(A, compute_uv=False)
        if s[0] < 1e-6:
            return
        U, S, V = truncated_svd(A, r)
        err = np.linalg.norm(A - (U * S) @ V.conj().T, 2)
        assert abs(err - s[r]) <= 1e-10 * s[0]


class TestEconomyQr:
    def test_orthonormal_input(self, rng):
        A = random_unitary(rng, 5, complex_=False)[:, :3]
        Q, R = economy_qr(A)
        np.testing.assert_allclose(np.abs(Q), np.abs(A), atol=1e-12)
        np.testing.assert_allclose(R, np.eye(3), atol=1e-12)

    def test_stacked_diagonal(self):
        A = np.vstack([np.diag([2.0, 3.0]), np.zeros((1, 2))])
        _, R = economy_qr(A)
        np.testing.assert_allclose(R, np.diag([2.0, 3.0]), atol=1e-14)

    def test_random_residual(self, rng):
        A = rng.standard_normal((8, 3))
        Q, R = economy_qr(A)
        assert np.linalg.norm(A - Q @ R) <= 1e-12 * np.linalg.norm(A)
        assert np.all(np.diag(R) > 0)
        np.testing.assert_allclose(np.tril(R, -1), 0.0)

    def test_rank_deficient(self, rng):
        a = rng.standard_normal(6)
        with pytest.raises(RankError):
            economy_qr(np.column_stack([a, 2 * a, rng.standard_normal(6)]))

    def test_deterministic(self, rng):
        A = rng.standard_normal((9, 4)) + 1j * rng.standard_normal((9, 4))
        Q1, R1 = economy_qr(A)
        Q2, R2 = economy_qr(A)
        assert np.array_equal(Q1, Q2) and np.array_equal(R1, R2)


class TestEig:
    def test_diagonal(self):
        w, _ = eig(np.diag([0.9, 0.5]))
        np.testing.assert_allclose(np.sort(w.real), [0.5, 0.9])

    def test_rotation(self):
        a = 0.7
        w, _ = eig(rotation(a))
        np.testing.assert_allclose(np.sort_complex(w), np.sort_complex(np.exp([1j * a, -1j * a])), atol=1e-14)

    def test_companion_cube_roots(self):
        C = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        w, _ = eig(C)
        roots = np.array([1.0, -0.5 + 0.8660254037844386j, -0.5 - 0.8660254037844386j])
        assert match_eigenvalues(w, roots) <= 1e-10

    def test_residual_contract(self, rng):
        A = rng.standard_normal((6, 6))
        w, V = eig(A)
        for j in range(6):
            assert np.linalg.norm(A @ V[:, j] - w[j] * V[:, j]) <= 1e-8 * np.linalg.norm(A, 2)

    def test_non_square(self):
        with pytest.raises(DimensionError):
            eig(np.ones((2, 3)))


class TestUnitaryEig:
    def test_identity(self):
        w, V = unitary_eig(np.eye(3))
        np.testing.assert_allclose(w, np.ones(3))
        np.testing.assert_allclose(np.abs(V), np.eye(3), atol=1e-14)

    def test_rotation(self):
        w, V = unitary_eig(rotation(0.3))
        assert match_eigenvalues(w, np.exp([0.3j, -0.3j])) <= 1e-14
        np.testing.assert_allclose(V.conj().T @ V, np.eye(2), atol=1e-12)

    def test_random_unitary(self, rng):
        U = random_unitary(rng, 20)
        w, V = unitary_eig(U)
        assert np.max(np.abs(np.abs(w) - 1)) <= 1e-12
        np.testing.assert_allclose(V.conj().T @ V, np.eye(20), atol=1e-10)
        np.testing.assert_allclose(U @ V, V * w, atol=1e-10)

    def test_not_unitary(self):
        with pytest.raises(PreconditionError):
            unitary_eig(np.diag([1.0, 2.0]))

    @given(st.integers(1, 12), st.integers(0, 2 ** 31 - 1))
    def test_unit_modulus(self, n, seed):
        U = random_unitary(np.random.default_rng(seed), n)
        w, V = unitary_eig(U)
        assert np.max(np.abs(np.abs(w) - 1)) <= 1e-12
        assert np.linalg.norm(V.conj().T @ V - np.eye(n), 2) <= 1e-10


class TestPinv:
    def test_singular_diagonal(self):
        np.testing.assert_allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))

    def test_orthonormal_columns(self, rng):
        A = random_unitary(rng, 5)[:, :3]
        np.testing.assert_allclose(pinv(A), A.conj().T, atol=1e-12)

    def test_penrose_identity(self, rng):
        A = rng.standard_normal((5, 3))
        np.testing.assert_allclose(A @ pinv(A) @ A, A, atol=1e-10)

    @given(arrays(float, (5, 3), elements=finite))
    def test_all_penrose_conditions(self, A):
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] < 1e-3 * max(s[0], 1e-300) or s[0] < 1e-6:
            return
        P = pinv(A)
        scale = np.linalg.norm(A) * np.linalg.norm(P)
        assert np.linalg.norm(A @ P @ A - A) <= 1e-10 * scale * np.linalg.norm(A)
        assert np.linalg.norm(P @ A @ P - P) <= 1e-10 * scale * np.linalg.norm(P)
        assert np.linalg.norm((A @ P).T - A @ P) <= 1e-10 * scale
        assert np.linalg.norm((P @ A).T - P @ A) <= 1e-10 * scale


class TestSmallestSingularPair:
    def test_diagonal(self):
        s, v = smallest_singular_pair(np.diag([3.0, 1.0]))
        assert s == pytest.approx(1.0)
        np.testing.assert_allclose(np.abs(v), [0.0, 1.0], atol=1e-15)

    def test_exact_null_vector(self, rng):
        B = rng.standard_normal((6, 3))
        A = np.column_stack([B, B @ np.array([1.0, -2.0, 0.5])])
        s, v = smallest_singular_pair(A)
        assert s <= 1e-14 * np.linalg.norm(A)
        assert np.linalg.norm(v) == pytest.approx(1.0)

    def test_matches_full_svd(self, rng):
        A = rng.standard_normal((6, 4))
        s, _ = smallest_singular_pair(A)
        assert abs(s - np.linalg.svd(A, compute_uv=False)[-1]) <= 1e-12


class TestPrincipalSqrtm:
    def test_identity(self):
        np.testing.assert_allclose(principal_sqrtm(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(principal_sqrtm(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)

    def test_random_right_half_plane(self, rng):
        P = rng.standard_normal((5, 5))
        A = P @ np.diag(rng.uniform(0.5, 3.0, 5)) @ np.linalg.inv(P)
        S = principal_sqrtm(A)
        assert np.linalg.norm(S @ S - A) <= 1e-8 * np.linalg.norm(A)
        assert np.all(np.linalg.eigvals(S).real > 0)

    def test_branch_cut(self):
        with pytest.raises(BranchError):
            principal_sqrtm(np.diag([1.0, -2.0]))


class TestKmeans:
    def test_k_equals_m(self, rng):
        pts = rng.standard_normal((6, 2))
        c = kmeans(pts, 6, seed=0)
        np.testing.assert_allclose(np.sort(c[:, 0]), np.sort(pts[:, 0]))

    def test_single_cluster(self, rng):
        pts = rng.standard_normal((50, 3))
        np.testing.assert_allclose(kmeans(pts, 1, seed=0)[0], pts.mean(axis=0), atol=1e-12)

    def test_two_blobs(self, rng):
        a = rng.normal([-5.0, 0.0], 0.3, (200, 2))
        b = rng.normal([5.0, 1.0], 0.3, (200, 2))
        c = kmeans(np.vstack([a, b]), 2, seed=1)
        c = c[np.argsort(c[:, 0])]
        assert np.linalg.norm(c[0] - a.mean(axis=0)) <= 0.1
        assert np.linalg.norm(c[1] - b.mean(axis=0)) <= 0.1

    def test_deterministic(self, rng):
        pts = rng.standard_normal((100, 2))
        assert np.array_equal(kmeans(pts, 5, seed=3), kmeans(pts, 5, seed=3))

    def test_duplicate_points(self):
        pts = np.vstack([np.zeros((10, 2)), np.ones((2, 2))])
        c = kmeans(pts, 3, seed=0)
        assert c.shape == (3, 2) and np.all(np.isfinite(c))


class TestCosamp:
    def test_one_sparse_against_exhaustive_search(self, rng):
        Phi = rng.standard_normal((20, 50))
        x0 = np.zeros(50)
        x0[17] = 1.7
        y = Phi @ x0
        # oracle: best single column by least squares
        errs = [np.linalg.norm(y - Phi[:, [j]] @ np.linalg.lstsq(Phi[:, [j]], y, rcond=None)[0]) for j in range(50)]
        assert int(np.argmin(errs)) == 17
        x = cosamp(Phi, y, 1)
        assert np.flatnonzero(x).tolist() == [17]
        assert abs(x[17] - 1.7) <= 1e-10

    def test_zero_measurement(self, rng):
        np.testing.assert_array_equal(cosamp(rng.standard_normal((10, 20)), np.zeros(10), 2), np.zeros(20))

    def test_three_sparse(self, rng):
        Phi = rng.standard_normal((40, 100))
        x0 = np.zeros(100)
        x0[[3, 41, 77]] = [1.0, -2.0, 0.5]
        x = cosamp(Phi, Phi @ x0, 3)
        assert np.linalg.norm(x - x0) <= 1e-8 * np.linalg.norm(x0)

    def test_column_shape_kept(self, rng):
        Phi = rng.standard_normal((12, 30))
        x0 = np.zeros((30, 1))
        x0[4] = 1.0
        assert cosamp(Phi, Phi @ x0, 1).shape == (30, 1)

    def test_sparsity_too_large(self, rng):
        with pytest.raises(PreconditionError):
            cosamp(rng.standard_normal((5, 10)), np.ones(5), 3)

    def test_best_iterate_on_failure(self, rng):
        Phi = rng.standard_normal((8, 40))
        y = rng.standard_normal(8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            x, res, ok = cosamp(Phi, y, 2, iters=5, return_info=True)
        assert np.count_nonzero(x) <= 2
        assert res == pytest.approx(np.linalg.norm(y - Phi @ x))


class TestMatchEigenvalues:
    def test_permutation_invariant(self):
        a = np.array([1.0, 2.0j, -1.0])
        assert match_eigenvalues(a, a[::-1]) == 0.0

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            match_eigenvalues([1.0], [1.0, 2.0])
