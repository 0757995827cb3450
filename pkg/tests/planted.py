"""Planted-model generators shared by the unit and acceptance tests."""

import numpy as np
from scipy.linalg import subspace_angles

from kmv.compression import fourier_basis


def low_rank_linear(d, M, r, seed):
    """Real trajectory ``(d, M + 1)`` of exact rank ``r`` from ``r/2`` rotating pairs."""
    rng = np.random.default_rng(seed)
    U = np.linalg.qr(rng.standard_normal((d, r)))[0]
    blocks = []
    for _ in range(r // 2):
        rho, th = rng.uniform(0.98, 1.0), rng.uniform(0.1, 3.0)
        blocks.append(rho * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]))
    A = np.zeros((r, r))
    for k, Bk in enumerate(blocks):
        A[2 * k:2 * k + 2, 2 * k:2 * k + 2] = Bk
    P = rng.standard_normal((r, r))
    A = P @ A @ np.linalg.inv(P)
    Z = np.empty((r, M + 1))
    Z[:, 0] = rng.standard_normal(r)
    for m in range(M):
        Z[:, m + 1] = A @ Z[:, m]
    return U @ Z, np.linalg.eigvals(A)


def sparse_fourier_modes(d=256, r=4, s=5, M=50, seed=0):
    """Trajectory whose ``r`` DMD modes are ``s``-sparse in the unitary Fourier basis.

    Returns
    -------
    X : (d, M + 1) complex ndarray
    modes : (d, r) complex ndarray
    lam : (r,) complex ndarray
    B : (d, d) unitary basis
    """
    rng = np.random.default_rng(seed)
    B = fourier_basis(d)
    S = np.zeros((d, r), dtype=complex)
    for j in range(r):
        idx = rng.choice(d, s, replace=False)
        S[idx, j] = rng.standard_normal(s) + 1j * rng.standard_normal(s)
    modes = B @ S
    lam = rng.uniform(0.9, 1.0, r) * np.exp(1j * np.linspace(0.3, 2.8, r))
    b = rng.standard_normal(r) + 1j * rng.standard_normal(r)
    X = modes @ (b[:, None] * lam[:, None] ** np.arange(M + 1)[None, :])
    return X, modes, lam, B


def max_mode_angle(recovered, truth, lam_rec, lam_true):
    """Largest principal angle between each true mode and its matched recovered mode."""
    worst = 0.0
    for j, lt in enumerate(lam_true):
        k = int(np.argmin(np.abs(lam_rec - lt)))
        worst = max(worst, float(subspace_angles(recovered[:, [k]], truth[:, [j]]).max()))
    return worst


def symmetric_qp_oracle(X, Y):
    """Brute-force symmetric least squares: solve for the free entries of ``S = S^T`` directly."""
    d = X.shape[0]
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    cols = []
    for i, j in pairs:
        E = np.zeros((d, d))
        E[i, j] = E[j, i] = 1.0
        cols.append((E @ X).ravel())
    theta = np.linalg.lstsq(np.column_stack(cols), Y.ravel(), rcond=None)[0]
    S = np.zeros((d, d))
    for (i, j), t in zip(pairs, theta):
        S[i, j] = S[j, i] = t
    return S


def w1_lp(a, wa, b, wb):
    """Wasserstein-1 on the line by the discrete transport linear program."""
    from scipy.optimize import linprog

    n, m = len(a), len(b)
    cost = np.abs(np.subtract.outer(np.asarray(a), np.asarray(b))).ravel()
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    out = linprog(cost, A_eq=A_eq, b_eq=np.concatenate([wa, wb]), bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    return out.fun


def planted_manifold(manifold, d, rng):
    """Random member of a manifold."""
    A = rng.standard_normal((d, d))
    if manifold == "orthogonal":
        return np.linalg.qr(A)[0]
    if manifold == "symmetric":
        return (A + A.T) / 2
    if manifold == "causal":
        return np.triu(A)
    if manifold == "circulant":
        c = rng.standard_normal(d)
        return np.stack([np.roll(c, j) for j in range(d)], axis=1)
    raise ValueError(manifold)
