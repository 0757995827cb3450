"""Regression-type DMD estimators.

Exact DMD and its forecast, the noise-robust variants (forward-backward,
total least squares, optimized), the sensor-noise bias factor, DMD with
control and multiresolution DMD.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .data import SnapshotPair, as_pair
from .errors import (
    BranchError,
    ConvergenceWarning,
    DimensionError,
    KmvWarning,
    NumericalError,
    PreconditionError,
    RangeError,
    RankError,
)
from .numerics import EPS, check_finite, eig, pinv, principal_sqrtm, truncated_svd


@dataclass
class DmdResult:
    """Output of a DMD-type estimator.

    Attributes
    ----------
    eigenvalues : (r,) ndarray
        Discrete-time eigenvalues, or continuous-time exponents for
        ``kind == "opt"``.
    modes : (d, r) ndarray
    amplitudes : (r,) ndarray
    rank : int
    kind : str
    reduced : ndarray, optional
        Projected operator whose eigenvalues were returned.
    info : dict
        Estimator-specific diagnostics.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    amplitudes: np.ndarray
    rank: int
    kind: str
    reduced: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.eigenvalues)
        if self.modes.shape[1] != n or len(self.amplitudes) != n:
            raise DimensionError(f"{n} eigenvalues, {self.modes.shape[1]} modes, {len(self.amplitudes)} amplitudes")


def _checked_svd(A, r, what="X"):
    A = check_finite(A, what)
    r = int(r)
    if not 1 <= r <= min(A.shape):
        raise DimensionError(f"rank {r} outside [1, {min(A.shape)}] for {what} of shape {A.shape}")
    U, S, V = truncated_svd(A, r)
    cut = max(A.shape) * EPS * (S[0] if S.size else 0.0)
    if S[-1] <= cut:
        good = int(np.sum(S > cut))
        raise RankError(f"singular value {r} of {what} is below the rank cutoff; try rank <= {good}", rank=good)
    return U, S, V


def _amplitudes(Phi, x0):
    return pinv(Phi) @ x0


def exact_dmd(pair, r: int, scale_modes: bool = False) -> DmdResult:
    """Exact DMD.

    Parameters
    ----------
    pair : SnapshotPair or (X, Y)
    r : int
        Truncation rank.
    scale_modes : bool
        Divide each mode by its eigenvalue.

    Returns
    -------
    DmdResult
        Amplitudes are fitted against the first snapshot.
    """
    pair = as_pair(pair)
    X, Y = pair.X, pair.Y
    U, S, V = _checked_svd(X, r)
    YVS = (Y @ V) / S
    Kt = U.conj().T @ YVS
    lam, W = eig(Kt)
    Phi = YVS @ W
    if scale_modes:
        Phi = Phi / lam
    return DmdResult(lam, Phi, _amplitudes(Phi, X[:, 0]), r, "exact", Kt, {"basis": U})


def kmd_forecast(res: DmdResult, x0, n: int):
    """Columns ``Phi Lambda^k b`` for ``k = 0..n`` with ``b = Phi^+ x0``."""
    b = _amplitudes(res.modes, np.asarray(x0))
    powers = res.eigenvalues[:, None] ** np.arange(n + 1)[None, :]
    return res.modes @ (b[:, None] * powers)


def _eig_sqrt_nearest(P, ref):
    """Square root of ``P`` choosing per-eigenvalue signs closest to ``ref`` in eigencoordinates."""
    mu, W = sla.eig(P)
    target = np.diag(np.linalg.solve(W, ref @ W))
    root = np.sqrt(mu.astype(complex))
    root = np.where(np.abs(root - target) <= np.abs(-root - target), root, -root)
    return (W * root) @ np.linalg.inv(W)


def fbdmd(pair, r: int, branch: str = "auto") -> DmdResult:
    """Forward-backward DMD.

    Parameters
    ----------
    pair : SnapshotPair or (X, Y)
    r : int
    branch : {"auto", "nearest", "positive-real"}
        Square root branch policy. ``"positive-real"`` takes the principal
        root; ``"nearest"`` picks, per eigenvalue, the root closest to the
        forward propagator in eigencoordinates; ``"auto"`` uses the
        principal root when every forward eigenvalue has ``|arg| < pi/2``.
    """
    if branch not in ("auto", "nearest", "positive-real"):
        raise PreconditionError(f"unknown branch policy {branch!r}")
    pair = as_pair(pair)
    X, Y = pair.X, pair.Y
    U, S, V = _checked_svd(X, r)
    Xt = U.conj().T @ X
    Yt = U.conj().T @ Y
    Ux, Sx, Vx = _checked_svd(Xt, r, "projected X")
    Uy, Sy, Vy = _checked_svd(Yt, r, "projected Y")
    Sf = (Yt @ Vx) / Sx
    Sb = (Xt @ Vy) / Sy
    Kf_t = Ux.conj().T @ Sf
    Kb_t = Uy.conj().T @ Sb
    Kf = Sf @ Kf_t @ pinv(Sf)
    Kb = Sb @ Kb_t @ pinv(Sb)
    if np.linalg.cond(Kb) > 1.0 / (r * EPS):
        raise RankError("backward propagator is not invertible at this rank")
    P = np.linalg.solve(Kb.T, Kf.T).T
    if branch == "auto":
        lam_f = sla.eigvals(Kf)
        branch = "positive-real" if np.all(np.abs(np.angle(lam_f)) < np.pi / 2) else "nearest"
    used = branch
    if branch == "positive-real":
        try:
            Kt = principal_sqrtm(P)
        except (BranchError, NumericalError) as exc:
            warnings.warn(f"principal square root failed ({exc}); using eigencoordinate root",
                          KmvWarning, stacklevel=2)
            Kt = _eig_sqrt_nearest(P, Kf)
            used = "nearest"
    else:
        Kt = _eig_sqrt_nearest(P, Kf)
    lam, W = eig(Kt)
    Phi = ((Y @ V) / S) @ W
    return DmdResult(lam, Phi, _amplitudes(Phi, X[:, 0]), r, "fb", Kt, {"branch": used, "basis": U})


def tlsdmd(pair, r: int) -> DmdResult:
    """Total least-squares DMD; requires ``r < M / 2``."""
    pair = as_pair(pair)
    X, Y = pair.X, pair.Y
    M = X.shape[1]
    if not r < M / 2:
        raise PreconditionError(f"total least-squares DMD needs r < M/2, got r={r}, M={M}")
    U, S, V = _checked_svd(X, r)
    Z = np.vstack([U.conj().T @ X, U.conj().T @ Y])
    Uz, _, _ = truncated_svd(Z, min(Z.shape))
    U1 = Uz[:r, :r]
    U2 = Uz[r:2 * r, :r]
    if np.linalg.cond(U1) > 1.0 / (r * EPS):
        raise NumericalError("degenerate geometry: leading block of the stacked singular vectors is singular")
    Kt = np.linalg.solve(U1.T, U2.T).T
    lam, W = eig(Kt)
    Phi = ((Y @ V) / S) @ W
    return DmdResult(lam, Phi, _amplitudes(Phi, X[:, 0]), r, "tls", Kt, {"basis": U})


def _varpro_residual(alpha, t, Z):
    E = np.exp(np.outer(t, alpha))
    B = pinv(E) @ Z
    R = Z - E @ B
    return np.concatenate([R.real.ravel(), R.imag.ravel()]), B


def optdmd(X, times, r: int, init=None, budget: int = 100, tol: float = 1e-12) -> DmdResult:
    """Optimized DMD by variable projection.

    Fits ``U* X`` (transposed) by ``E(alpha) B`` with
    ``E(alpha)_{ij} = exp(alpha_j t_i)``, eliminating ``B`` by least squares
    and running Levenberg-Marquardt on ``alpha`` with a finite-difference
    Jacobian.

    Parameters
    ----------
    X : (d, M + 1) array_like
        Snapshots at ``times``.
    times : (M + 1,) array_like
        Strictly increasing sample times (need not be equispaced).
    r : int
    init : array_like, optional
        Initial exponents; by default the logarithms of exact DMD
        eigenvalues divided by the median time step.
    budget : int
        Iteration cap.
    tol : float
        Relative cost decrease at which iterations stop.

    Returns
    -------
    DmdResult
        ``eigenvalues`` are continuous-time exponents ``alpha``; modes are
        unit-norm and ``amplitudes`` carry their norms. ``info`` holds
        ``converged``, ``residual`` and ``iterations``.
    """
    X = check_finite(X, "X")
    t = np.asarray(times, dtype=float).reshape(-1)
    if t.size != X.shape[1]:
        raise DimensionError(f"{t.size} times for {X.shape[1]} snapshots")
    if np.any(np.diff(t) <= 0):
        raise PreconditionError("times must be strictly increasing")
    U, _, _ = _checked_svd(X, r)
    Z = (U.conj().T @ X).T
    if init is None:
        dt0 = float(np.median(np.diff(t)))
        lam = exact_dmd((X[:, :-1], X[:, 1:]), r).eigenvalues.astype(complex)
        lam[lam == 0] = EPS
        alpha = np.log(lam) / dt0
    else:
        alpha = np.asarray(init, dtype=complex).reshape(-1)
        if alpha.size != r:
            raise DimensionError(f"initial guess has {alpha.size} entries, expected {r}")
    t0 = t[0]
    ts = t - t0

    def unpack(p):
        return p[:r] + 1j * p[r:]

    p = np.concatenate([alpha.real, alpha.imag])
    res, _ = _varpro_residual(unpack(p), ts, Z)
    cost = res @ res
    mu = 1e-3
    converged = False
    it = 0
    for it in range(1, budget + 1):
        J = np.empty((res.size, 2 * r))
        a = unpack(p)
        for i in range(2 * r):
            h = 1e-7 * (1.0 + abs(a[i % r]))
            q = p.copy()
            q[i] += h
            J[:, i] = (_varpro_residual(unpack(q), ts, Z)[0] - res) / h
        H = J.T @ J
        g = J.T @ res
        dH = np.maximum(np.diag(H), 1e-12 * max(np.max(np.diag(H)), 1.0))
        improved = False
        for _ in range(30):
            try:
                step = np.linalg.solve(H + mu * np.diag(dH), -g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            q = p + step
            new_res, _ = _varpro_residual(unpack(q), ts, Z)
            new_cost = new_res @ new_res
            if np.isfinite(new_cost) and new_cost < cost:
                improved = True
                break
            mu *= 4
        if not improved:
            converged = True
            break
        rel = (cost - new_cost) / max(cost, np.finfo(float).tiny)
        p, res, cost = q, new_res, new_cost
        mu = max(mu / 3, 1e-15)
        if rel < tol or cost <= (EPS * np.linalg.norm(Z)) ** 2:
            converged = True
            break
    alpha = unpack(p)
    _, B = _varpro_residual(alpha, ts, Z)
    # amplitudes refer to t = 0
    B = B * np.exp(-alpha * t0)[:, None]
    full = U @ B.T
    norms = np.linalg.norm(full, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    Phi = full / safe
    if not converged:
        warnings.warn(f"optDMD reached the iteration cap ({budget}) with residual {np.sqrt(cost):.3e}",
                      ConvergenceWarning, stacklevel=2)
    info = {"converged": converged, "residual": float(np.sqrt(cost)), "iterations": it, "basis": U}
    return DmdResult(alpha, Phi, norms.astype(complex), r, "opt", None, info)


def noise_bias_estimate(Xc, noise_cov):
    """Multiplicative bias factor ``I - E[N N*] (Xc Xc*)^{-1}`` of exact DMD.

    Parameters
    ----------
    Xc : (r, M) array_like
        Projected noise-free data.
    noise_cov : (r, r) array_like
        Expected ``N N*`` of the projected noise (summed over snapshots).
    """
    Xc = check_finite(Xc, "Xc")
    C = Xc @ Xc.conj().T
    n = C.shape[0]
    Nc = np.asarray(noise_cov)
    if Nc.shape != (n, n):
        raise DimensionError(f"noise covariance has shape {Nc.shape}, expected {(n, n)}")
    if np.linalg.cond(C) > 1.0 / (n * EPS):
        raise RankError("projected data correlation matrix is singular")
    return np.eye(n) - np.linalg.solve(C.T, Nc.T).T


@dataclass
class ControlSnapshots:
    """Snapshot triplets for actuated systems: ``Y ~ A X + B U``."""

    X: np.ndarray
    Y: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        self.X, self.Y = np.asarray(self.X), np.asarray(self.Y)
        self.U = np.atleast_2d(np.asarray(self.U))
        if self.X.shape != self.Y.shape or self.U.shape[1] != self.X.shape[1]:
            raise DimensionError(f"inconsistent shapes X{self.X.shape}, Y{self.Y.shape}, U{self.U.shape}")


def dmdc(snap: ControlSnapshots, p: int, r: int):
    """DMD with control.

    Parameters
    ----------
    snap : ControlSnapshots
    p : int
        Truncation rank of the stacked input matrix ``[X; U]``.
    r : int
        Truncation rank of the output matrix ``Y``.

    Returns
    -------
    result : DmdResult
        Eigenvalues of the reduced state matrix and full-state modes.
    Bred : (r, q) ndarray
        Reduced input matrix.
    """
    X, Y, Ups = snap.X, snap.Y, snap.U
    d = X.shape[0]
    if p > d + Ups.shape[0] or r > d:
        raise DimensionError(f"need p <= d + q and r <= d, got p={p}, r={r}, d={d}, q={Ups.shape[0]}")
    Om = np.vstack([X, Ups])
    Ut, St, Vt = _checked_svd(Om, p, "stacked input matrix [X; U]")
    Uh, _, _ = _checked_svd(Y, r, "output matrix Y")
    U1, U2 = Ut[:d], Ut[d:]
    YVS = (Y @ Vt) / St
    At = Uh.conj().T @ YVS @ U1.conj().T @ Uh
    Bt = Uh.conj().T @ YVS @ U2.conj().T
    lam, W = eig(At)
    Phi = YVS @ U1.conj().T @ Uh @ W
    res = DmdResult(lam, Phi, _amplitudes(Phi, X[:, 0]), r, "dmdc", At, {"basis": Uh})
    return res, Bt


@dataclass
class MrDmdNode:
    """One time bin of a multiresolution decomposition.

    ``eta`` are continuous exponents of the retained slow modes and
    ``amplitudes`` refer to the start of the bin.
    """

    level: int
    bin: int
    time_span: tuple
    index_span: tuple
    dt: float
    modes: np.ndarray
    eta: np.ndarray
    amplitudes: np.ndarray
    children: list = field(default_factory=list)
    note: str = ""

    def evaluate(self, t):
        tau = np.asarray(t, dtype=float) - self.time_span[0]
        return self.modes @ (self.amplitudes[:, None] * np.exp(np.outer(self.eta, np.atleast_1d(tau))))

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def level_nodes(self, level):
        return [n for n in self.walk() if n.level == level]


def _slow_fit(block, dt, rho, max_modes, keep_all):
    d, n = block.shape
    empty = (np.zeros((d, 0), dtype=complex), np.zeros(0, dtype=complex), np.zeros(0, dtype=complex))
    X, Y = block[:, :-1], block[:, 1:]
    s = sla.svdvals(X)
    if s.size == 0 or s[0] <= np.finfo(float).tiny:
        return empty
    rank = int(np.sum(s > max(X.shape) * EPS * s[0] * 10))
    if max_modes is not None:
        rank = min(rank, max_modes)
    if rank == 0:
        return empty
    res = exact_dmd((X, Y), rank)
    lam = res.eigenvalues
    ok = np.abs(lam) > np.finfo(float).tiny
    eta = np.full(lam.shape, np.inf, dtype=complex)
    eta[ok] = np.log(lam[ok]) / dt
    duration = n * dt
    cycles = np.abs(eta.imag) * duration / (2 * np.pi)
    slow = ok & (keep_all | (cycles <= rho * (1 + 1e-9)))
    return res.modes[:, slow], eta[slow], res.amplitudes[slow]


def mrdmd(traj, dt: float, levels: int, rho: float = 1.0, max_modes: Optional[int] = None,
          t0: float = 0.0, keep_all_final: bool = True) -> MrDmdNode:
    """Multiresolution DMD.

    At each bin exact DMD is fitted, modes completing at most ``rho``
    cycles over the bin are kept as slow modes, their reconstruction is
    subtracted and the remainder is split in half for the next level.

    Parameters
    ----------
    traj : (d, T) array_like
        Single trajectory sampled at spacing ``dt``; ``T >= 4 * 2**levels``.
    dt : float
    levels : int
    rho : float
        Cycle threshold per bin.
    max_modes : int, optional
        Cap on the DMD rank used in each bin.
    t0 : float
        Time of the first sample.
    keep_all_final : bool
        At the deepest level keep every mode, so the remainder is
        represented at the finest resolution.

    Returns
    -------
    MrDmdNode
        Root of the tree; bins of level ``l`` cover ``T / 2**(l-1)`` samples.
    """
    traj = check_finite(traj, "trajectory")
    if traj.ndim == 1:
        traj = traj[None, :]
    T = traj.shape[1]
    if levels < 1:
        raise PreconditionError(f"levels must be >= 1, got {levels}")
    if T < 4 * 2 ** levels:
        raise PreconditionError(f"need at least {4 * 2 ** levels} samples for {levels} levels, got {T}")
    real = np.isrealobj(traj)

    def build(block, level, j, i0):
        n = block.shape[1]
        span = (t0 + i0 * dt, t0 + (i0 + n) * dt)
        node = MrDmdNode(level, j, span, (i0, i0 + n), dt, *[np.zeros((block.shape[0], 0), complex),
                                                             np.zeros(0, complex), np.zeros(0, complex)])
        if n < 4:
            node.note = f"bin of {n} samples too short; not refined"
            warnings.warn(node.note, KmvWarning, stacklevel=3)
            return node
        node.modes, node.eta, node.amplitudes = _slow_fit(block, dt, rho, max_modes,
                                                          keep_all_final and level == levels)
        recon = node.evaluate(span[0] + dt * np.arange(n))
        rest = block - (recon.real if real else recon)
        if level < levels:
            h = n // 2
            node.children = [build(rest[:, :h], level + 1, 2 * j, i0),
                             build(rest[:, h:], level + 1, 2 * j + 1, i0 + h)]
        return node

    return build(traj, 1, 0, 0)


def mrdmd_reconstruct(tree: MrDmdNode, t):
    """Evaluate the multiresolution expansion at time(s) ``t``.

    Sums, over levels, the slow modes of the bin containing each time.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    lo, hi = tree.time_span
    if np.any(ts < lo) or np.any(ts >= hi):
        raise RangeError(f"times must lie in [{lo}, {hi})")
    d = tree.modes.shape[0]
    out = np.zeros((d, ts.size), dtype=complex)
    for node in tree.walk():
        a, b = node.time_span
        mask = (ts >= a) & (ts < b)
        if mask.any() and node.eta.size:
            out[:, mask] += node.evaluate(ts[mask])
    return out[:, 0] if np.ndim(t) == 0 else out
