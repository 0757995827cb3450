"""Observable dictionaries and the weighted feature and correlation matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .data import SnapshotPair, as_pair
from .errors import DimensionError, InputError, NumericalError
from .numerics import kmeans


@dataclass
class Dictionary:
    """Ordered list of ``N`` scalar observables.

    ``evaluate`` maps a ``(d, M)`` block of states to the ``(M, N)`` feature
    matrix whose row ``m`` is ``Psi(x_m)``.
    """

    N: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    description: str

    def __call__(self, x):
        """Feature row for a single state or matrix for a block of states."""
        x = np.asarray(x)
        if x.ndim == 1:
            return self.evaluate(x[:, None])[0]
        return self.evaluate(x)


def linear_dictionary(d: int) -> Dictionary:
    """Coordinate observables ``psi_j(x) = x_j``."""
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")

    def ev(X):
        if X.shape[0] != d:
            raise DimensionError(f"state dimension {X.shape[0]} != {d}")
        return X.T.copy()

    return Dictionary(d, ev, f"linear(d={d})")


def rbf_scale(samples) -> float:
    """Squared reciprocal of the mean distance of the samples to their mean."""
    S = np.asarray(samples, dtype=float)
    dist = np.linalg.norm(S - S.mean(axis=1, keepdims=True), axis=0)
    avg = dist.mean()
    if not avg > 0:
        raise InputError("all samples coincide; the RBF scale is undefined")
    return 1.0 / avg ** 2


def rbf_from_centers(centers, gamma: float, block: int = 4096) -> Dictionary:
    """Radial basis functions ``exp(-gamma ||x - c_j||)`` with fixed centers.

    Parameters
    ----------
    centers : (N, d) array_like
    gamma : float
    block : int
        Rows evaluated per chunk, to bound temporary memory.
    """
    C = np.asarray(centers, dtype=float)
    N, d = C.shape

    def ev(X):
        if X.shape[0] != d:
            raise DimensionError(f"state dimension {X.shape[0]} != {d}")
        P = X.T
        out = np.empty((P.shape[0], N))
        for s in range(0, P.shape[0], block):
            D = cdist(P[s:s + block], C)
            np.exp(-gamma * D, out=out[s:s + block])
        return out

    dic = Dictionary(N, ev, f"rbf(N={N}, gamma={gamma:.17g})")
    dic.centers = C
    dic.gamma = gamma
    return dic


def rbf_dictionary(samples, N: int, seed=None, n_init: int = 10) -> Dictionary:
    """RBF dictionary with k-means centers.

    Parameters
    ----------
    samples : (d, M) array_like
        Sample states, one per column.
    N : int
        Number of centers, at most ``M``.
    seed : int, optional
        Seed for k-means.

    Notes
    -----
    The exponent uses the unsquared distance ``||x - c_j||`` and the scale
    ``gamma`` is the squared reciprocal of the average norm of the
    mean-centered samples.
    """
    S = np.asarray(samples, dtype=float)
    if S.ndim == 1:
        S = S[None, :]
    if S.shape[1] < N:
        raise DimensionError(f"need at least N={N} samples, got {S.shape[1]}")
    gamma = rbf_scale(S)
    centers = kmeans(S.T, N, seed=seed, n_init=n_init)
    return rbf_from_centers(centers, gamma)


def fourier_dictionary(K: int) -> Dictionary:
    """Fourier modes ``exp(i k theta)`` for ``k = -K..K`` on the circle."""
    if K < 0:
        raise DimensionError(f"max harmonic must be >= 0, got {K}")
    ks = np.arange(-K, K + 1)

    def ev(X):
        if X.shape[0] != 1:
            raise DimensionError(f"Fourier dictionary needs scalar angles, got dimension {X.shape[0]}")
        return np.exp(1j * X[0][:, None] * ks[None, :])

    dic = Dictionary(2 * K + 1, ev, f"fourier(K={K})")
    dic.harmonics = ks
    return dic


@dataclass
class EdmdMatrices:
    """Feature matrices and quadrature correlation matrices.

    ``G = PsiX* D PsiX``, ``A = PsiX* D PsiY`` and ``L = PsiY* D PsiY`` with
    ``D = diag(weights)``.
    """

    PsiX: np.ndarray
    PsiY: np.ndarray
    weights: np.ndarray
    G: np.ndarray
    A: np.ndarray
    L: np.ndarray
    X: np.ndarray = None

    @property
    def sqrtw(self):
        return np.sqrt(self.weights)

    @property
    def N(self) -> int:
        return self.PsiX.shape[1]

    @property
    def M(self) -> int:
        return self.PsiX.shape[0]

    def weighted(self):
        """``(D^{1/2} PsiX, D^{1/2} PsiY)``."""
        w = self.sqrtw[:, None]
        return w * self.PsiX, w * self.PsiY


def _hermitian(H):
    return 0.5 * (H + H.conj().T)


def assemble_features(PsiX, PsiY, weights=None, X=None) -> EdmdMatrices:
    """Build `EdmdMatrices` from precomputed feature matrices ``(M, N)``.

    Real features stay real; complex features are kept complex.
    """
    PsiX = np.asarray(PsiX)
    PsiY = np.asarray(PsiY)
    if PsiX.shape != PsiY.shape or PsiX.ndim != 2:
        raise DimensionError(f"feature shapes differ: {PsiX.shape} vs {PsiY.shape}")
    M = PsiX.shape[0]
    w = np.full(M, 1.0 / M) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.size != M:
        raise DimensionError(f"{w.size} weights for {M} samples")
    for name, P in (("PsiX", PsiX), ("PsiY", PsiY)):
        if not np.all(np.isfinite(P)):
            m, j = np.argwhere(~np.isfinite(P))[0]
            raise NumericalError(f"non-finite feature in {name}: observable {j}, sample {m}")
    WX = PsiX * w[:, None]
    G = _hermitian(PsiX.conj().T @ WX)
    A = WX.conj().T @ PsiY
    L = _hermitian(PsiY.conj().T @ (PsiY * w[:, None]))
    return EdmdMatrices(PsiX, PsiY, w, G, A, L, X)


def assemble(pair, dic: Dictionary) -> EdmdMatrices:
    """Evaluate the dictionary on a snapshot pair and form ``G``, ``A``, ``L``."""
    pair = as_pair(pair)
    PsiX = dic.evaluate(pair.X)
    PsiY = dic.evaluate(pair.Y)
    if PsiX.shape != (pair.M, dic.N):
        raise DimensionError(f"dictionary returned shape {PsiX.shape}, expected {(pair.M, dic.N)}")
    return assemble_features(PsiX, PsiY, pair.weights, pair.X)
