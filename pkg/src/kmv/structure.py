"""Structure-preserving estimators and spectral measures.

piDMD over four matrix manifolds, measure-preserving EDMD, atomic spectral
measures on the circle, their CDFs and the Wasserstein-1 distance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .data import as_pair
from .dictionaries import EdmdMatrices
from .errors import DimensionError, InputError, KmvWarning, PreconditionError
from .numerics import _svd, check_finite, economy_qr, eig, pinv, unitary_eig
from .regression import DmdResult

MANIFOLDS = ("orthogonal", "symmetric", "causal", "circulant")


def _orthogonal(X, Y):
    U, _, Vh = _svd(Y @ X.conj().T)
    return U @ Vh


def _symmetric(X, Y):
    d = X.shape[0]
    U, s, Vh = _svd(X)
    r = int(np.sum(s > max(X.shape) * np.finfo(float).eps * s[0])) if s.size and s[0] > 0 else 0
    if r == 0:
        return np.zeros((d, d), dtype=np.result_type(X, Y))
    U, s, V = U[:, :r], s[:r], Vh[:r].conj().T
    C = U.conj().T @ Y @ V
    den = s[:, None] ** 2 + s[None, :] ** 2
    Sh = (C * s[None, :] + np.conj(C).T * s[:, None]) / den
    return U @ Sh @ U.conj().T


def _causal(X, Y):
    d = X.shape[0]
    K = np.zeros((d, d), dtype=np.result_type(X, Y, float))
    for i in range(d):
        Xi = X[i:]
        if not np.any(Xi):
            warnings.warn(f"row {i}: no data in admissible columns, filled with zeros", KmvWarning, stacklevel=3)
            continue
        K[i, i:] = Y[i] @ pinv(Xi)
    return K


def _circulant(X, Y):
    d = X.shape[0]
    Xh = np.fft.fft(X, axis=0)
    Yh = np.fft.fft(Y, axis=0)
    nx = np.sum(np.abs(Xh) ** 2, axis=1)
    num = np.sum(Yh * np.conj(Xh), axis=1)
    kh = np.where(nx > 0, num / np.where(nx > 0, nx, 1.0), 0.0)
    if np.any(nx == 0):
        warnings.warn(f"{int(np.sum(nx == 0))} frequencies carry no data, set to zero", KmvWarning, stacklevel=3)
    K = np.fft.ifft(kh[:, None] * np.fft.fft(np.eye(d), axis=0), axis=0)
    if np.isrealobj(X) and np.isrealobj(Y):
        K = K.real
    return K


def is_on_manifold(K, manifold: str, tol: float = 1e-10) -> bool:
    """Membership predicate for the supported manifolds."""
    K = np.asarray(K)
    d = K.shape[0]
    scale = max(np.linalg.norm(K), 1.0)
    if manifold == "orthogonal":
        return np.linalg.norm(K.conj().T @ K - np.eye(d)) <= tol * d
    if manifold == "symmetric":
        return np.linalg.norm(K - K.conj().T) <= tol * scale
    if manifold == "causal":
        return np.linalg.norm(np.tril(K, -1)) <= tol * scale
    if manifold == "circulant":
        ref = np.stack([np.roll(K[:, 0], j) for j in range(d)], axis=1)
        return np.linalg.norm(K - ref) <= tol * scale
    raise PreconditionError(f"unknown manifold {manifold!r}")


def pidmd(pair, manifold: str):
    """Physics-informed DMD: least-squares propagator restricted to a manifold.

    Parameters
    ----------
    pair : SnapshotPair or (X, Y)
    manifold : {"orthogonal", "symmetric", "causal", "circulant"}
        ``"causal"`` means upper triangular.

    Returns
    -------
    K : (d, d) ndarray
        Minimizer of ``||Y - K X||_F`` over the manifold.
    result : DmdResult
        Eigendecomposition of ``K``.
    """
    pair = as_pair(pair)
    X = check_finite(pair.X, "X")
    Y = check_finite(pair.Y, "Y")
    solvers = {"orthogonal": _orthogonal, "symmetric": _symmetric, "causal": _causal, "circulant": _circulant}
    if manifold not in solvers:
        raise PreconditionError(f"unknown manifold {manifold!r}; choose from {MANIFOLDS}")
    K = solvers[manifold](X, Y)
    if manifold == "orthogonal":
        lam, W = unitary_eig(K)
    elif manifold == "symmetric":
        lam, W = np.linalg.eigh(K)
    else:
        lam, W = eig(K)
    lam = np.asarray(lam, dtype=complex)
    b = pinv(W) @ X[:, 0]
    return K, DmdResult(lam, W, b, K.shape[0], f"pidmd-{manifold}", K)


@dataclass
class MpEdmdResult:
    """Measure-preserving EDMD output.

    ``K = R^{-1} U R`` with ``U`` unitary and ``G = R* R``. ``V = R^{-1} Vh``
    where ``Vh`` is the orthonormal eigenbasis of ``U``.
    """

    K: np.ndarray
    V: np.ndarray
    eigenvalues: np.ndarray
    G: np.ndarray
    koopman_modes: np.ndarray
    R: np.ndarray
    unitary: np.ndarray
    Vhat: np.ndarray

    def propagate(self, g, n: int):
        """Coefficients ``K^n g`` evaluated through the eigenbasis of the unitary factor."""
        c = self.R @ np.asarray(g)
        if n:
            c = self.Vhat @ (self.eigenvalues ** n * (self.Vhat.conj().T @ c))
        return sla.solve_triangular(self.R, c)

    def energy(self, g) -> float:
        """``||g||_G``."""
        return float(np.linalg.norm(self.R @ np.asarray(g)))


def mpedmd(mats: EdmdMatrices, X=None) -> MpEdmdResult:
    """Measure-preserving EDMD.

    Solves the orthogonal Procrustes problem in the Gram-orthonormalized
    coordinates and returns a ``G``-isometric matrix with unit-modulus
    eigenvalues.
    """
    WX, WY = mats.weighted()
    Q, R = economy_qr(WX)
    Yh = sla.solve_triangular(R, WY.T, trans="T").T
    U1, _, U2h = _svd(Yh.conj().T @ Q)
    Uni = U2h.conj().T @ U1.conj().T
    lam, Vhat = unitary_eig(Uni)
    K = sla.solve_triangular(R, Uni @ R)
    V = sla.solve_triangular(R, Vhat)
    G = R.conj().T @ R
    X = mats.X if X is None else np.asarray(X)
    modes = None
    if X is not None:
        modes = Vhat.conj().T @ (Q.conj().T @ (mats.sqrtw[:, None] * X.T))
    return MpEdmdResult(K, V, lam, G, modes, R, Uni, Vhat)


@dataclass
class SpectralMeasure:
    """Atomic probability measure on the circle parametrized by ``[-pi, pi)``."""

    angles: np.ndarray
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if a.size != w.size:
            raise DimensionError(f"{a.size} angles but {w.size} weights")
        if np.any(w < 0):
            raise InputError("weights must be nonnegative")
        a = np.where(a >= np.pi, a - 2 * np.pi, a)
        if np.any(a < -np.pi) or np.any(a >= np.pi):
            raise InputError("angles must lie in [-pi, pi)")
        order = np.argsort(a, kind="stable")
        self.angles, self.weights = _merge(a[order], w[order])

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


def _merge(a, w, tol=1e-12):
    if a.size == 0:
        return a, w
    groups = np.concatenate([[0], np.cumsum(np.diff(a) > tol)])
    ng = groups[-1] + 1
    wm = np.bincount(groups, weights=w, minlength=ng)
    first = np.concatenate([[True], np.diff(groups) > 0])
    return a[first], wm


def _wrap(theta):
    t = np.angle(np.exp(1j * np.asarray(theta, dtype=float)))
    return np.where(t >= np.pi, -np.pi, t)


def spectral_measure(res: MpEdmdResult, g_coeffs, normalize: bool = True) -> SpectralMeasure:
    """Atomic spectral measure of an observable with atoms at ``arg(lambda_j)``.

    Weights are ``|v_j* G g|^2``, evaluated stably as ``|Vh_j* R g|^2``.
    """
    Rg = res.R @ np.asarray(g_coeffs).reshape(-1)
    nrm = np.linalg.norm(Rg)
    if nrm == 0:
        raise InputError("observable has zero norm in the G inner product")
    if normalize:
        Rg = Rg / nrm
    w = np.abs(res.Vhat.conj().T @ Rg) ** 2
    theta = _wrap(np.angle(res.eigenvalues))
    mu = SpectralMeasure(theta, w, normalize)
    return mu


def measure_cdf(mu: SpectralMeasure, theta):
    """Total weight of atoms with angle ``<= theta``."""
    th = np.asarray(theta, dtype=float)
    cw = np.concatenate([[0.0], np.cumsum(mu.weights)])
    idx = np.searchsorted(mu.angles, th, side="right")
    out = cw[idx]
    return float(out) if out.ndim == 0 else out


def wasserstein1(mu: SpectralMeasure, nu: SpectralMeasure, tol: float = 1e-8) -> float:
    """Wasserstein-1 distance on the cut interval ``[-pi, pi)``, ``int |F_mu - F_nu|``."""
    for name, m in (("first", mu), ("second", nu)):
        if abs(m.mass - 1.0) > tol:
            raise InputError(f"{name} measure is not normalized (mass {m.mass:.6g})")
    br = np.unique(np.concatenate([[-np.pi, np.pi], mu.angles, nu.angles]))
    F = measure_cdf(mu, br[:-1]) - measure_cdf(nu, br[:-1])
    return float(np.sum(np.abs(F) * np.diff(br)))
