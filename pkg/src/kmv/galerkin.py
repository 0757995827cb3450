"""Galerkin view: EDMD, Koopman mode expansions, Hankel-DMD and HAVOK."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .data import hankel_embed
from .dictionaries import EdmdMatrices
from .errors import DimensionError, KmvWarning, NumericalError, PreconditionError, RankError
from .numerics import _svd, eig, numerical_rank
from .regression import DmdResult, exact_dmd


def eig_order(lam):
    """Indices sorting eigenvalues by descending modulus, then real part, then imaginary part.

    Moduli are compared after rounding to 12 significant digits so that
    conjugate pairs tie on modulus.
    """
    lam = np.asarray(lam)
    mod = np.abs(lam)
    scale = np.max(mod, initial=0.0)
    key = np.round(mod / scale, 12) if scale > 0 else mod
    re = np.round(lam.real / scale, 12) if scale > 0 else lam.real
    return np.lexsort((-lam.imag, -re, -key))


def log_scale_eigs(lam, dt: float):
    """Continuous-time exponents ``log(lam) / dt``; zero eigenvalues are dropped with a warning."""
    lam = np.asarray(lam, dtype=complex)
    zero = lam == 0
    if zero.any():
        warnings.warn(f"{zero.sum()} zero eigenvalue(s) excluded from the logarithm", KmvWarning, stacklevel=2)
    return np.log(lam[~zero]) / dt


@dataclass
class EdmdResult:
    """EDMD output.

    Attributes
    ----------
    K : (N, N) ndarray
        Matrix acting on dictionary coefficients.
    eigenvalues : (N,) ndarray
    right_vectors : (N, N) ndarray
        Eigenvector coefficients ``V`` with ``K V = V diag(eigenvalues)``.
    koopman_modes : (N, d) ndarray or None
        Rows are Koopman modes of the state.
    rank : int
        Numerical rank of the weighted feature matrix.
    """

    K: np.ndarray
    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    koopman_modes: Optional[np.ndarray]
    rank: int
    mats: EdmdMatrices = field(repr=False, default=None)
    _factors: tuple = field(repr=False, default=None)

    def lstsq_features(self, target):
        """``(D^{1/2} PsiX)^+ D^{1/2} target`` for sample-indexed ``target``."""
        U, s, Vh = self._factors
        t = np.asarray(target)
        wt = self.mats.sqrtw.reshape((-1,) + (1,) * (t.ndim - 1)) * t
        return Vh.conj().T @ ((U.conj().T @ wt) / s.reshape((-1,) + (1,) * (t.ndim - 1)))


def edmd(mats: EdmdMatrices, rank_policy: str = "truncate", X=None) -> EdmdResult:
    """Extended DMD ``K = (D^{1/2} PsiX)^+ D^{1/2} PsiY``.

    Parameters
    ----------
    mats : EdmdMatrices
    rank_policy : {"truncate", "error"}
        On numerical rank deficiency, either project onto the numerical
        range of the weighted feature matrix or raise `RankError`.
    X : (d, M) array_like, optional
        State snapshots for the Koopman modes; defaults to ``mats.X``.

    Returns
    -------
    EdmdResult
        Eigenpairs sorted by descending modulus.
    """
    if rank_policy not in ("truncate", "error"):
        raise PreconditionError(f"unknown rank policy {rank_policy!r}")
    WX, WY = mats.weighted()
    U, s, Vh = _svd(WX)
    r = numerical_rank(s, WX.shape)
    N = WX.shape[1]
    if r == 0:
        raise RankError("weighted feature matrix is zero", rank=0)
    if r < N:
        if rank_policy == "error":
            raise RankError(f"weighted feature matrix has numerical rank {r} < N={N}; "
                            f"reduce the dictionary to at most {r} functions", rank=r)
        U, s, Vh = U[:, :r], s[:r], Vh[:r]
    K = Vh.conj().T @ ((U.conj().T @ WY) / s[:, None])
    lam, V = eig(K)
    order = eig_order(lam)
    lam, V = lam[order], V[:, order]
    res = EdmdResult(K, lam, V, None, r, mats, (U, s, Vh))
    X = mats.X if X is None else np.asarray(X)
    if X is not None:
        res.koopman_modes = _solve_V(V, res.lstsq_features(X.T))
    return res


def _solve_V(V, rhs):
    c = np.linalg.cond(V)
    if c > 1e12:
        warnings.warn(f"eigenvector matrix is ill conditioned (cond ~ {c:.1e})", KmvWarning, stacklevel=3)
    return np.linalg.solve(V, rhs)


def kmd_expand(res: EdmdResult, g_samples):
    """Coefficients of an observable in the eigenvector basis.

    Parameters
    ----------
    res : EdmdResult
    g_samples : (M,) or (M, k) array_like
        Values of the observable(s) at the ``X`` snapshots.

    Returns
    -------
    ndarray
        ``V^{-1} (D^{1/2} PsiX)^+ D^{1/2} g``.
    """
    g = np.asarray(g_samples)
    if g.shape[0] != res.mats.M:
        raise DimensionError(f"{g.shape[0]} samples but the data has M={res.mats.M}")
    return _solve_V(res.right_vectors, res.lstsq_features(g))


def invariant_level_set(res: EdmdResult, threshold: float, tol: float = 1e-3):
    """Mask of samples on one side of a level set of a non-constant ``lambda = 1`` eigenfunction.

    Among eigenpairs within ``tol`` of 1, the eigenfunction with the largest
    relative spread over the ``X`` samples is phase-aligned to be real and
    rescaled to ``[0, 1]``. Samples with value ``>= threshold`` are flagged.
    Which basin maps near 1 depends on the eigenvector sign; invert the mask
    for the other one.

    Returns
    -------
    mask : (M,) bool ndarray
    values : (M,) ndarray
        Rescaled eigenfunction values.
    """
    near = np.flatnonzero(np.abs(res.eigenvalues - 1) <= tol)
    if near.size == 0:
        raise NumericalError(f"no eigenvalue within {tol} of 1")
    vals = res.mats.PsiX @ res.right_vectors[:, near]
    spread = np.std(vals, axis=0) / np.maximum(np.mean(np.abs(vals), axis=0), np.finfo(float).tiny)
    phi = vals[:, np.argmax(spread)]
    phi = (phi * np.exp(-0.5j * np.angle(np.sum(phi ** 2)))).real
    lo, hi = phi.min(), phi.max()
    if hi - lo <= 1e-12 * max(abs(hi), 1.0):
        raise NumericalError("the eigenfunctions at 1 are constant on the data; no invariant split")
    values = (phi - lo) / (hi - lo)
    return values >= threshold, values


def hankel_dmd(series, N: int, r: int) -> DmdResult:
    """Exact DMD on the transposed Hankel matrices of a scalar series."""
    if r > N:
        raise DimensionError(f"rank {r} exceeds window {N}")
    PsiX, PsiY = hankel_embed(series, N)
    res = exact_dmd((PsiX.T, PsiY.T), r)
    res.kind = "hankel"
    return res


def _derivative(v, dt):
    """Fourth-order finite differences along axis 0; one-sided at the ends."""
    n = v.shape[0]
    if n < 5:
        raise DimensionError(f"need at least 5 samples for differentiation, got {n}")
    dv = np.empty_like(v)
    dv[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * dt)
    fw = np.array([-25, 48, -36, 16, -3]) / (12 * dt)
    dv[0] = fw @ v[0:5]
    dv[1] = fw @ v[1:6] if n >= 6 else (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * dt)
    dv[-1] = -(fw @ v[::-1][0:5])
    dv[-2] = -(fw @ v[::-1][1:6]) if n >= 6 else -(-3 * v[-1] - 10 * v[-2] + 18 * v[-3] - 6 * v[-4] + v[-5]) / (12 * dt)
    return dv


@dataclass
class HavokModel:
    """Forced linear model ``dv~/dt = K_lin v~ + B_force v_r`` in delay coordinates.

    Attributes
    ----------
    K_lin : (r - 1, r - 1) ndarray
    B_force : (r - 1, 1) ndarray
    v_r_series : (M,) ndarray
        Forcing coordinate.
    basis : tuple
        ``(U, S, V)`` of the transposed Hankel matrix truncated at rank ``r``.
    closure : (r, r) ndarray
        Unforced linear model ``dv/dt = A v`` fitted on all ``r`` coordinates.
    forced_error : float
        Relative one-step prediction error of the forced model on ``v~``.
    closure_error : float
        Relative one-step prediction error of the unforced closure on all
        ``r`` coordinates.
    forcing_error : float
        Relative one-step prediction error of the closure on ``v_r`` alone.

    Notes
    -----
    One-step predictions integrate the fitted model exactly over one step
    with the forcing held constant; errors are relative to the true one-step
    increments.
    """

    K_lin: np.ndarray
    B_force: np.ndarray
    v_r_series: np.ndarray
    basis: tuple
    dt: float
    closure: Optional[np.ndarray] = None
    forced_error: float = np.nan
    closure_error: float = np.nan
    forcing_error: float = np.nan

    @property
    def coordinates(self):
        return self.basis[2]


def _rel(resid, target):
    n = np.linalg.norm(target)
    return float(np.linalg.norm(resid) / n) if n > 0 else 0.0


def havok(series, N: int, r: int, dt: float) -> HavokModel:
    """Hankel alternative view of Koopman: linear delay model with intermittent forcing.

    Parameters
    ----------
    series : (L,) array_like
        Scalar time series sampled at ``dt``.
    N : int
        Hankel window (number of delays).
    r : int
        Number of delay coordinates, ``r >= 2``; the last one is the forcing.
    dt : float
    """
    if r < 2:
        raise PreconditionError(f"HAVOK needs r >= 2, got {r}")
    if r > N:
        raise DimensionError(f"rank {r} exceeds window {N}")
    PsiX, _ = hankel_embed(series, N)
    U, s, Vh = _svd(PsiX.T)
    U, s, V = U[:, :r], s[:r], Vh[:r].conj().T
    if s[0] == 0:
        # singular vectors of a zero matrix are arbitrary; the model is zero
        V = np.zeros_like(V)
    dV = _derivative(V, dt)
    A, *_ = np.linalg.lstsq(V, dV, rcond=None)
    A = A.T
    # least squares on the same regressors: the first r - 1 rows are the forced model
    K_lin, B = A[: r - 1, : r - 1], A[: r - 1, r - 1:]
    forced = np.zeros((r, r), dtype=A.dtype)
    forced[: r - 1] = A[: r - 1]
    step = V[1:] - V[:-1]
    pf = V[:-1] @ sla.expm(forced * dt).T
    pc = V[:-1] @ sla.expm(A * dt).T
    e_forced = _rel(V[1:, : r - 1] - pf[:, : r - 1], step[:, : r - 1])
    e_closure = _rel(V[1:] - pc, step)
    e_forcing = _rel(V[1:, r - 1] - pc[:, r - 1], step[:, r - 1])
    return HavokModel(K_lin, B, V[:, r - 1].copy(), (U, s, V), dt, A, e_forced, e_closure, e_forcing)
