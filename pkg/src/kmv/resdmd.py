"""Residual DMD: residuals of candidate eigenpairs, filtered spectra and pseudospectra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .dictionaries import EdmdMatrices
from .errors import DimensionError, NumericalError, PreconditionError
from .galerkin import edmd
from .numerics import EPS, economy_qr


@dataclass
class ResidualReport:
    """Candidate eigenpairs with their residuals."""

    eigenvalues: np.ndarray
    residuals: np.ndarray
    vectors: np.ndarray
    threshold: Optional[float] = None

    def __len__(self):
        return len(self.eigenvalues)


def _quad(V, H):
    return np.einsum("ij,ij->j", V.conj(), H @ V)


def residuals(mats: EdmdMatrices, eigenvalues, vectors, method: str = "auto") -> ResidualReport:
    """Residuals ``||(PsiY - lam PsiX) v||_D / ||PsiX v||_D`` of candidate pairs.

    Parameters
    ----------
    mats : EdmdMatrices
    eigenvalues : (k,) array_like
    vectors : (N, k) array_like
        Candidate coefficient vectors, one per column.
    method : {"auto", "quadratic", "direct"}
        ``"quadratic"`` evaluates the quadratic form in ``G``, ``A``, ``L``
        with the numerator clamped at zero. ``"direct"`` evaluates the norm
        from the feature matrices. ``"auto"`` uses the quadratic form and
        switches to the direct norm for pairs whose numerator is within
        rounding of zero.
    """
    if method not in ("auto", "quadratic", "direct"):
        raise PreconditionError(f"unknown residual method {method!r}")
    lam = np.asarray(eigenvalues, dtype=complex).reshape(-1)
    V = np.asarray(vectors)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape != (mats.N, lam.size):
        raise DimensionError(f"vectors have shape {V.shape}, expected {(mats.N, lam.size)}")
    den = _quad(V, mats.G).real
    scale = np.linalg.norm(mats.G, 2) * np.sum(np.abs(V) ** 2, axis=0)
    if np.any(den <= EPS * scale):
        j = int(np.argmax(den <= EPS * scale))
        raise NumericalError(f"candidate {j} has zero norm in the G inner product")
    res = np.empty(lam.size)
    direct = np.zeros(lam.size, dtype=bool)
    if method in ("auto", "quadratic"):
        vLv = _quad(V, mats.L).real
        vAv = _quad(V, mats.A)
        num = vLv - 2 * (np.conj(lam) * vAv).real + np.abs(lam) ** 2 * den
        res = np.sqrt(np.maximum(num, 0.0) / den)
        if method == "auto":
            direct = num <= 1e-6 * (vLv + np.abs(lam) ** 2 * den)
    else:
        direct[:] = True
    if direct.any():
        WX, WY = mats.weighted()
        for j in np.flatnonzero(direct):
            x = WX @ V[:, j]
            res[j] = np.linalg.norm(WY @ V[:, j] - lam[j] * x) / np.linalg.norm(x)
    return ResidualReport(lam, res, V)


def filtered_spectrum(mats: EdmdMatrices, eps: float, method: str = "auto") -> ResidualReport:
    """EDMD eigenpairs whose residual is at most ``eps``.

    The full report is attached as ``report.full``.
    """
    if not eps > 0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    res = edmd(mats)
    full = residuals(mats, res.eigenvalues, res.right_vectors, method)
    keep = full.residuals <= eps
    out = ResidualReport(full.eigenvalues[keep], full.residuals[keep], full.vectors[:, keep], eps)
    out.full = full
    return out


@dataclass
class PseudospectrumGrid:
    """Grid of shifts ``z`` with ``tau(z) = min ||(PsiY - z PsiX) v|| / ||PsiX v||``."""

    points: np.ndarray
    tau: np.ndarray
    epsilon: Optional[np.ndarray] = None
    vectors: Optional[np.ndarray] = None
    direct: np.ndarray = field(default=None, repr=False)

    def inside(self, eps):
        """Points of the approximate ``eps``-pseudospectrum."""
        return self.points[self.tau < eps]


def complex_grid(box=(-1.5, 1.5, -1.5, 1.5), n: int = 100):
    """Uniform ``n x n`` lattice of complex points over ``(xmin, xmax, ymin, ymax)``."""
    x = np.linspace(box[0], box[1], n)
    y = np.linspace(box[2], box[3], n)
    return (x[None, :] + 1j * y[:, None]).ravel()


class _PseudoEngine:
    """Shared factorizations for pseudospectrum evaluation."""

    def __init__(self, mats: EdmdMatrices):
        WX, WY = mats.weighted()
        self.Q, self.R = economy_qr(WX)
        R = self.R
        self.condR = np.linalg.cond(R)
        Yh = sla.solve_triangular(R, WY.T, trans="T", lower=False).T
        self.C1 = self.Q.conj().T @ Yh
        C2 = Yh.conj().T @ Yh
        self.C2 = 0.5 * (C2 + C2.conj().T)
        self.nC1 = np.linalg.norm(self.C1, 2)
        self.nC2 = np.linalg.norm(self.C2, 2)
        self._Yh = Yh
        self._R2 = None

    @property
    def R2(self):
        if self._R2 is None:
            E = self._Yh - self.Q @ self.C1
            corr = self.Q.conj().T @ E
            E -= self.Q @ corr
            self.C1d = self.C1 + corr
            self._R2 = np.linalg.qr(E, mode="r")
            self._Yh = None
        return self._R2

    def squared(self, z, want):
        N = self.C1.shape[0]
        H = self.C2 - z * self.C1.conj().T - np.conj(z) * self.C1 + abs(z) ** 2 * np.eye(N)
        if want:
            w, U = np.linalg.eigh(H)
            return w[0], U[:, 0]
        return sla.eigvalsh(H, subset_by_index=[0, 0])[0], None

    def direct(self, z, want):
        R2 = self.R2
        N = R2.shape[1]
        T = np.vstack([self.C1d - z * np.eye(N), R2])
        if want:
            _, s, Vh = np.linalg.svd(T, full_matrices=False)
            return s[-1], Vh[-1].conj()
        return np.linalg.svd(T, compute_uv=False)[-1], None


def pseudospectrum(mats: EdmdMatrices, grid, eps=None, want_vectors: bool = False,
                   method: str = "auto", switch: float = 1e6) -> PseudospectrumGrid:
    """Approximate pseudospectrum on a grid of shifts.

    Parameters
    ----------
    mats : EdmdMatrices
    grid : array_like of complex
        Shifts ``z``.
    eps : float or array_like, optional
        Contour levels stored with the result.
    want_vectors : bool
        Also return the minimizing coefficient vectors (columns).
    method : {"auto", "squared", "direct"}
        ``"squared"`` uses the smallest eigenvalue of the Hermitian
        ``N x N`` form; ``"direct"`` uses singular values of the shifted
        data matrix without squaring. ``"auto"`` uses the direct path when
        ``|z|^2 cond(R) > switch`` or when the squared form cannot resolve
        ``tau`` to about six digits.

    Notes
    -----
    The direct path reduces the ``M x N`` matrix ``D^{1/2} PsiY R^{-1} - z Q``
    once to an equivalent ``2N x N`` matrix with the same singular values.
    """
    if method not in ("auto", "squared", "direct"):
        raise PreconditionError(f"unknown pseudospectrum method {method!r}")
    z_all = np.asarray(grid, dtype=complex).reshape(-1)
    eng = _PseudoEngine(mats)
    N = eng.C1.shape[0]
    tau = np.empty(z_all.size)
    used = np.zeros(z_all.size, dtype=bool)
    vecs = np.empty((N, z_all.size), dtype=complex) if want_vectors else None
    for k, z in enumerate(z_all):
        go_direct = method == "direct" or (method == "auto" and abs(z) ** 2 * eng.condR > switch)
        if not go_direct:
            t2, w = eng.squared(z, want_vectors)
            size = eng.nC2 + 2 * abs(z) * eng.nC1 + abs(z) ** 2
            if method == "auto" and t2 < 1e6 * EPS * size:
                go_direct = True
            else:
                tau[k] = np.sqrt(max(t2, 0.0))
        if go_direct:
            tau[k], w = eng.direct(z, want_vectors)
            used[k] = True
        if want_vectors:
            v = sla.solve_triangular(eng.R, w)
            vecs[:, k] = v / np.linalg.norm(v)
    levels = None if eps is None else np.atleast_1d(np.asarray(eps, dtype=float))
    return PseudospectrumGrid(z_all, tau, levels, vecs, used)
