"""Dense matrix kernels used by every estimator.

All routines accept real or complex arrays, reject non-finite input and
take explicit seeds for any randomness.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import (
    BranchError,
    ConvergenceWarning,
    DimensionError,
    InputError,
    NumericalError,
    PreconditionError,
    RankError,
)

EPS = np.finfo(float).eps


@dataclass
class SvdResult:
    """Truncated singular value decomposition ``A ~ U diag(S) V*``."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __iter__(self):
        return iter((self.U, self.S, self.V))


@dataclass
class EigResult:
    """Eigenvalues and (column) eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray

    def __iter__(self):
        return iter((self.values, self.vectors))


def check_finite(A, name="input"):
    """Return ``A`` as an array, raising `InputError` on NaN or Inf."""
    A = np.asarray(A)
    if A.dtype.kind not in "fciub":
        raise InputError(f"{name} must be numeric, got dtype {A.dtype}")
    if not np.all(np.isfinite(A)):
        bad = np.argwhere(~np.isfinite(A))[0]
        raise InputError(f"{name} has a non-finite entry at index {tuple(bad)}")
    return A


def default_rtol(shape, smax=1.0):
    """Absolute singular value cutoff ``max(shape) * eps * smax``."""
    return max(shape) * EPS * smax


def numerical_rank(s, shape, rtol=None):
    """Number of singular values above the cutoff."""
    s = np.asarray(s)
    if s.size == 0 or s[0] == 0:
        return 0
    tol = default_rtol(shape, s[0]) if rtol is None else rtol * s[0]
    return int(np.sum(s > tol))


def _svd(A, full_matrices=False, compute_uv=True):
    try:
        return sla.svd(A, full_matrices=full_matrices, compute_uv=compute_uv,
                       lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        try:
            return sla.svd(A, full_matrices=full_matrices, compute_uv=compute_uv,
                           lapack_driver="gesvd", check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD did not converge: {exc}") from exc


def truncated_svd(A, r: int) -> SvdResult:
    """Rank-``r`` truncated SVD.

    Parameters
    ----------
    A : (m, n) array_like
        Matrix to factor.
    r : int
        Number of singular triplets kept, ``1 <= r <= min(m, n)``.

    Returns
    -------
    SvdResult
        ``U`` (m, r), ``S`` (r,) descending, ``V`` (n, r).
    """
    A = check_finite(A, "matrix")
    if A.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {A.shape}")
    r = int(r)
    if not 1 <= r <= min(A.shape):
        raise DimensionError(f"rank {r} outside [1, {min(A.shape)}] for shape {A.shape}")
    U, s, Vh = _svd(A)
    return SvdResult(U[:, :r], s[:r], Vh[:r].conj().T)


def economy_qr(A, rtol=None):
    """Economy QR factorization with a positive diagonal on ``R``.

    Parameters
    ----------
    A : (m, n) array_like
        Matrix with ``m >= n`` and full column rank.
    rtol : float, optional
        Relative cutoff on ``|R_ii|`` used to detect rank deficiency.
        Defaults to ``max(m, n) * eps``.

    Returns
    -------
    Q : (m, n) ndarray
        Orthonormal columns.
    R : (n, n) ndarray
        Upper triangular with strictly positive diagonal.

    Raises
    ------
    RankError
        If ``A`` is numerically rank deficient; ``rank`` carries the
        estimated numerical rank.
    """
    A = check_finite(A, "matrix")
    m, n = A.shape
    if m < n:
        raise DimensionError(f"economy QR needs rows >= cols, got {A.shape}")
    Q, R = sla.qr(A, mode="economic", check_finite=False)
    d = np.diag(R)
    scale = np.max(np.abs(d)) if n else 0.0
    tol = (max(m, n) * EPS if rtol is None else rtol) * scale
    if n and (scale == 0 or np.any(np.abs(d) <= tol)):
        s = _svd(A, compute_uv=False)
        rank = numerical_rank(s, A.shape, rtol)
        if rank < n:
            raise RankError(f"matrix of shape {A.shape} has numerical rank {rank} < {n}", rank=rank)
    phase = np.where(d == 0, 1.0, d / np.where(d == 0, 1.0, np.abs(d)))
    Q = Q * phase[None, :]
    R = phase.conj()[:, None] * R
    R[np.diag_indices(n)] = np.abs(np.diag(R))
    return Q, R


def eig(A) -> EigResult:
    """General eigendecomposition ``A V = V diag(values)``.

    Eigenvectors are normalized to unit 2-norm.
    """
    A = check_finite(A, "matrix")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"eig needs a square matrix, got shape {A.shape}")
    try:
        w, V = sla.eig(A, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed for {A.shape} matrix: {exc}") from exc
    return EigResult(w, V)


def unitary_eig(U, tol: float = 1e-6) -> EigResult:
    """Eigendecomposition of a unitary matrix through its complex Schur form.

    The Schur factor of a unitary matrix is diagonal up to rounding, so the
    Schur vectors are an orthonormal eigenbasis. Eigenvalues are projected
    onto the unit circle.

    Raises
    ------
    PreconditionError
        If ``||U* U - I||_2 > tol``.
    """
    U = check_finite(U, "matrix")
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionError(f"unitary_eig needs a square matrix, got shape {U.shape}")
    n = U.shape[0]
    defect = np.linalg.norm(U.conj().T @ U - np.eye(n), 2) if n else 0.0
    if defect > tol:
        raise PreconditionError(f"matrix is not numerically unitary (||U*U - I|| = {defect:.3e})")
    T, Z = sla.schur(U.astype(complex), output="complex", check_finite=False)
    w = np.diag(T)
    w = w / np.abs(w)
    return EigResult(w, Z)


def pinv(A, rtol=None):
    """Moore-Penrose pseudoinverse.

    Singular values at or below ``rtol * sigma_max`` are treated as zero;
    the default ``rtol`` is ``max(m, n) * eps``.
    """
    A = check_finite(A, "matrix")
    if A.size == 0:
        return np.zeros(A.shape[::-1], dtype=A.dtype)
    U, s, Vh = _svd(A)
    if s[0] == 0:
        return np.zeros(A.shape[::-1], dtype=np.result_type(A, float))
    cut = (max(A.shape) * EPS if rtol is None else rtol) * s[0]
    keep = s > cut
    return (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T


def smallest_singular_pair(A):
    """Smallest singular value and its right singular vector.

    Parameters
    ----------
    A : (m, n) array_like
        Matrix with ``m >= n``.

    Returns
    -------
    sigma : float
    v : (n,) ndarray
        Unit-norm right singular vector.
    """
    A = check_finite(A, "matrix")
    if A.shape[0] < A.shape[1]:
        raise DimensionError(f"need rows >= cols, got {A.shape}")
    _, s, Vh = _svd(A)
    return float(s[-1]), Vh[-1].conj()


def principal_sqrtm(A, tol: float = 1e-8):
    """Principal matrix square root via the Schur method.

    Raises
    ------
    BranchError
        If an eigenvalue lies on the closed negative real axis.
    NumericalError
        If ``||S^2 - A|| > tol ||A||``.
    """
    A = check_finite(A, "matrix")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"sqrtm needs a square matrix, got shape {A.shape}")
    scale = max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    w = sla.eigvals(A, check_finite=False)
    cut = 1e-12 * scale
    on_cut = (np.abs(w.imag) <= cut) & (w.real <= cut)
    if np.any(on_cut):
        raise BranchError(f"eigenvalue {w[on_cut][0]:.3e} lies on the closed negative real axis")
    S = sla.sqrtm(A)
    if np.isrealobj(A) and np.iscomplexobj(S) and np.max(np.abs(S.imag), initial=0) <= 1e-13 * np.max(np.abs(S)):
        S = S.real
    err = np.linalg.norm(S @ S - A) / np.linalg.norm(A)
    if not np.isfinite(err) or err > tol:
        raise NumericalError(f"square root residual {err:.3e} exceeds {tol:.1e}")
    return S


def _kmeanspp(points, k, rng):
    M = points.shape[0]
    idx = np.empty(k, dtype=int)
    idx[0] = rng.integers(M)
    d2 = np.sum((points - points[idx[0]]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx[j] = rng.choice(M, p=d2 / total)
        else:
            idx[j] = rng.integers(M)
        d2 = np.minimum(d2, np.sum((points - points[idx[j]]) ** 2, axis=1))
    return points[idx].copy()


def _lloyd(points, centers, max_iter):
    M, d = points.shape
    k = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        dist, new = cKDTree(centers).query(points)
        counts = np.bincount(new, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            order = np.argsort(dist)[::-1]
            for j, p in zip(empty, order):
                centers[j] = points[p]
            dist, new = cKDTree(centers).query(points)
            counts = np.bincount(new, minlength=k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sums = np.stack([np.bincount(labels, weights=points[:, c], minlength=k) for c in range(d)], axis=1)
        nz = counts > 0
        centers[nz] = sums[nz] / counts[nz, None]
    dist, labels = cKDTree(centers).query(points)
    return centers, float(np.sum(dist ** 2))


def kmeans(points, k: int, seed=None, n_init: int = 10, max_iter: int = 100):
    """Lloyd's k-means with k-means++ seeding.

    Parameters
    ----------
    points : (M, d) array_like
        Real sample points, one per row.
    k : int
        Number of clusters, ``1 <= k <= M``.
    seed : int or Generator, optional
        Seed for seeding and restarts.
    n_init : int
        Number of restarts; the run with the smallest inertia is kept.
    max_iter : int
        Iteration cap per restart.

    Returns
    -------
    centers : (k, d) ndarray
    """
    points = np.asarray(check_finite(points, "points"), dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    M = points.shape[0]
    if not 1 <= k <= M:
        raise DimensionError(f"need 1 <= k <= M, got k={k}, M={M}")
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(max(1, n_init)):
        centers, inertia = _lloyd(points, _kmeanspp(points, k, rng), max_iter)
        if inertia < best_inertia:
            best, best_inertia = centers, inertia
    return best


def cosamp(Phi, y, s: int, iters: int = 50, tol: float = 1e-10, return_info: bool = False):
    """Compressive sampling matching pursuit.

    Parameters
    ----------
    Phi : (p, n) array_like
        Sensing matrix. Columns are normalized internally and the result is
        mapped back to the original scaling.
    y : (p,) or (p, 1) array_like
        Measurements.
    s : int
        Target sparsity, ``2 s <= p``.
    iters : int
        Iteration cap.
    tol : float
        Halting tolerance relative to ``||y||``.
    return_info : bool
        Also return the residual norm and a convergence flag.

    Returns
    -------
    x : ndarray
        ``s``-sparse estimate with the shape of ``y`` (column kept if given).
    residual, converged : float, bool
        Only when ``return_info`` is set.
    """
    Phi = check_finite(Phi, "sensing matrix")
    y = check_finite(y, "measurements")
    column = y.ndim == 2
    y = y.reshape(-1)
    p, n = Phi.shape
    if y.size != p:
        raise DimensionError(f"measurement length {y.size} does not match {p} rows")
    if 2 * s > p:
        raise PreconditionError(f"sparsity {s} too large for {p} measurements (need 2s <= p)")
    norms = np.linalg.norm(Phi, axis=0)
    norms[norms == 0] = 1.0
    A = Phi / norms
    dtype = np.result_type(A, y, float)
    z = np.zeros(n, dtype=dtype)
    ynorm = np.linalg.norm(y)
    res = y.astype(dtype)
    best_z, best_res = z.copy(), ynorm
    converged = ynorm == 0
    for _ in range(0 if converged else iters):
        proxy = A.conj().T @ res
        omega = np.argsort(np.abs(proxy))[::-1][: 2 * s]
        support = np.union1d(omega, np.flatnonzero(z))
        b, *_ = np.linalg.lstsq(A[:, support], y, rcond=None)
        keep = np.argsort(np.abs(b))[::-1][:s]
        z = np.zeros(n, dtype=dtype)
        z[support[keep]] = b[keep]
        # refit on the pruned support
        sup = support[keep]
        z[sup], *_ = np.linalg.lstsq(A[:, sup], y, rcond=None)
        res = y - A @ z
        rnorm = np.linalg.norm(res)
        if rnorm < best_res:
            best_z, best_res = z.copy(), rnorm
        if rnorm <= tol * ynorm:
            converged = True
            break
    if not converged:
        warnings.warn(f"CoSaMP stopped after {iters} iterations with residual {best_res:.3e}",
                      ConvergenceWarning, stacklevel=2)
    x = best_z / norms
    if column:
        x = x[:, None]
    if return_info:
        return x, float(best_res), bool(converged)
    return x


def match_eigenvalues(a, b):
    """Optimal one-to-one matching distance between two eigenvalue sets.

    Returns the largest pointwise distance under the assignment that
    minimizes the total distance. Both sets must have equal length.
    """
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.size != b.size:
        raise DimensionError(f"cannot match {a.size} eigenvalues against {b.size}")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(cost)
    return float(cost[i, j].max())
