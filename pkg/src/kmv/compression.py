"""Compressed and randomized DMD."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import as_pair
from .errors import ConvergenceWarning, DimensionError, KmvWarning, PreconditionError
from .numerics import check_finite, cosamp, eig, pinv
from .regression import DmdResult, _checked_svd, exact_dmd


@dataclass
class CompressionOperators:
    """Measurement matrix ``C`` (p, d) and unitary sparsifying basis ``B`` (d, d)."""

    C: np.ndarray
    B: Optional[np.ndarray] = None
    kind: str = "custom"

    def __post_init__(self):
        self.C = np.asarray(self.C)
        d = self.C.shape[1]
        if self.B is None:
            self.B = np.eye(d)
        self.B = np.asarray(self.B)
        if self.B.shape != (d, d):
            raise DimensionError(f"basis has shape {self.B.shape}, expected {(d, d)}")

    def check_unitary(self, tol=1e-10):
        d = self.B.shape[0]
        err = np.linalg.norm(self.B.conj().T @ self.B - np.eye(d), 2)
        if err > tol:
            raise PreconditionError(f"sparsifying basis is not unitary (defect {err:.2e})")


def gaussian_measurements(p: int, d: int, seed=None):
    """Gaussian measurement matrix with i.i.d. ``N(0, 1/p)`` entries."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((p, d)) / np.sqrt(p)


def fourier_basis(d: int, grid: Optional[tuple] = None):
    """Unitary inverse DFT basis, columns are Fourier modes.

    With ``grid=(n1, n2)`` and ``d = n1 n2`` the 2-D transform of the
    flattened (row-major) field is used.
    """
    if grid is None:
        return np.fft.ifft(np.eye(d), axis=0, norm="ortho")
    n1, n2 = grid
    if n1 * n2 != d:
        raise DimensionError(f"grid {grid} does not match dimension {d}")
    return np.kron(np.fft.ifft(np.eye(n1), axis=0, norm="ortho"), np.fft.ifft(np.eye(n2), axis=0, norm="ortho"))


def randomized_range_finder(X, r: int, p_over: int = 10, q: int = 2, seed=None):
    """Orthonormal basis ``Q`` (d, r + p_over) for the dominant range of ``X``.

    Gaussian test matrix followed by ``q`` QR-stabilized power iterations.
    """
    X = check_finite(X, "X")
    d, M = X.shape
    k = r + p_over
    if not 1 <= k <= min(d, M):
        raise DimensionError(f"r + p_over = {k} must lie in [1, {min(d, M)}]")
    rng = np.random.default_rng(seed)
    Omega = rng.standard_normal((M, k))
    if np.iscomplexobj(X):
        Omega = Omega + 1j * rng.standard_normal((M, k))
    Z = X @ Omega
    for _ in range(q):
        Q, _ = np.linalg.qr(Z)
        C, _ = np.linalg.qr(X.conj().T @ Q)
        Z = X @ C
    Q, _ = np.linalg.qr(Z)
    return Q


def rdmd(pair, r: int, p_over: int = 10, q: int = 2, seed=None) -> DmdResult:
    """Randomized DMD: sketch the range of ``X``, run DMD in sketch space, lift modes."""
    pair = as_pair(pair)
    Q = randomized_range_finder(pair.X, r, p_over, q, seed)
    Xc = Q.conj().T @ pair.X
    Yc = Q.conj().T @ pair.Y
    res = exact_dmd((Xc, Yc), r)
    Phi = Q @ res.modes
    return DmdResult(res.eigenvalues, Phi, res.amplitudes, r, "rdmd", res.reduced, {"range": Q})


def cdmd(pair, C, r: int) -> DmdResult:
    """Compressed DMD: DMD on ``(C X, C Y)`` with modes lifted through the full ``Y``."""
    pair = as_pair(pair)
    C = check_finite(C, "C")
    if C.shape[1] != pair.d:
        raise DimensionError(f"C has {C.shape[1]} columns but the state dimension is {pair.d}")
    if C.shape[0] < r:
        raise PreconditionError(f"need p >= r, got p={C.shape[0]}, r={r}")
    Xc = C @ pair.X
    Yc = C @ pair.Y
    U, S, V = _checked_svd(Xc, r, "compressed X")
    Kt = U.conj().T @ Yc @ V / S
    lam, W = eig(Kt)
    Phi = ((pair.Y @ V) / S) @ W
    b = pinv(Phi) @ pair.X[:, 0]
    return DmdResult(lam, Phi, b, r, "cdmd", Kt)


def csdmd(Xc, Yc, ops: CompressionOperators, r: int, s: int, iters: int = 50) -> DmdResult:
    """Compressed-sensing DMD from compressed data only.

    Modes of the compressed DMD are recovered as ``s``-sparse vectors in the
    basis ``B`` with CoSaMP against ``C B`` and lifted as ``B Phi_s``.
    ``info["flagged"]`` lists modes whose recovery did not converge.
    """
    ops.check_unitary()
    Xc = check_finite(Xc, "compressed X")
    Yc = check_finite(Yc, "compressed Y")
    p = ops.C.shape[0]
    if Xc.shape[0] != p:
        raise DimensionError(f"compressed data has {Xc.shape[0]} rows, C has {p}")
    if 2 * s > p:
        raise PreconditionError(f"sparsity {s} exceeds p/2 = {p / 2}")
    d = ops.B.shape[0]
    if not np.any(Xc):
        return DmdResult(np.zeros(0, complex), np.zeros((d, 0), complex), np.zeros(0, complex), 0, "csdmd")
    res = exact_dmd((Xc, Yc), r)
    Theta = ops.C @ ops.B
    Phi_s = np.zeros((d, res.modes.shape[1]), dtype=complex)
    flagged = []
    for j in range(res.modes.shape[1]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            z, resid, ok = cosamp(Theta, res.modes[:, j], s, iters=iters, return_info=True)
        if not ok:
            flagged.append(j)
            warnings.warn(f"sparse recovery of mode {j} did not converge (residual {resid:.2e})",
                          KmvWarning, stacklevel=2)
        Phi_s[:, j] = z
    Phi = ops.B @ Phi_s
    return DmdResult(res.eigenvalues, Phi, res.amplitudes, r, "csdmd", res.reduced,
                     {"sparse_modes": Phi_s, "flagged": flagged})
