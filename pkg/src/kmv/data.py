"""Snapshot pairs, delay embeddings, quadrature weights and CSV IO."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, InputError, ParseError, PreconditionError


@dataclass
class SnapshotPair:
    """Paired snapshots ``Y[:, m] = F(X[:, m])`` with quadrature weights.

    Parameters
    ----------
    X, Y : (d, M) ndarray
    weights : (M,) ndarray, optional
        Nonnegative quadrature weights; uniform ``1/M`` by default.
    """

    X: np.ndarray
    Y: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X)
        self.Y = np.asarray(self.Y)
        if self.X.ndim == 1:
            self.X = self.X[None, :]
        if self.Y.ndim == 1:
            self.Y = self.Y[None, :]
        if self.X.shape != self.Y.shape:
            raise DimensionError(f"X has shape {self.X.shape} but Y has shape {self.Y.shape}")
        M = self.X.shape[1]
        if self.weights is None:
            self.weights = np.full(M, 1.0 / M)
        else:
            self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if self.weights.size != M:
                raise DimensionError(f"{self.weights.size} weights for {M} snapshots")
            if np.any(self.weights < 0) or not self.weights.sum() > 0:
                raise InputError("weights must be nonnegative with positive sum")

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def M(self) -> int:
        return self.X.shape[1]


def as_pair(data) -> SnapshotPair:
    """Accept a `SnapshotPair` or an ``(X, Y)`` tuple."""
    if isinstance(data, SnapshotPair):
        return data
    X, Y = data
    return SnapshotPair(X, Y)


def pairs_from_trajectory(traj, weights=None) -> SnapshotPair:
    """Consecutive-snapshot pairs from a single trajectory ``(d, M + 1)``."""
    traj = np.asarray(traj)
    if traj.ndim == 1:
        traj = traj[None, :]
    if traj.shape[1] < 2:
        raise DimensionError("a trajectory needs at least 2 columns to form snapshot pairs")
    return SnapshotPair(traj[:, :-1], traj[:, 1:], weights)


def pairs_from_ensemble(trajs, weights=None) -> SnapshotPair:
    """Concatenate snapshot pairs from trajectories of shape ``(K, d, T)``."""
    trajs = np.asarray(trajs)
    if trajs.ndim != 3 or trajs.shape[2] < 2:
        raise DimensionError(f"expected (K, d, T) with T >= 2, got {trajs.shape}")
    K, d, T = trajs.shape
    X = np.transpose(trajs[:, :, :-1], (1, 0, 2)).reshape(d, K * (T - 1))
    Y = np.transpose(trajs[:, :, 1:], (1, 0, 2)).reshape(d, K * (T - 1))
    return SnapshotPair(X, Y, weights)


def hankel_embed(series, N: int):
    """Hankel feature matrices of a scalar series of length ``M + N``.

    Returns
    -------
    PsiX, PsiY : (M, N) ndarray
        Row ``m`` of ``PsiX`` is ``(g_m, ..., g_{m+N-1})``; ``PsiY`` is shifted
        forward by one sample.
    """
    g = np.asarray(series).reshape(-1)
    if N < 1:
        raise DimensionError(f"window must be >= 1, got {N}")
    M = g.size - N
    if M < 1:
        raise DimensionError(f"series of length {g.size} too short for window {N}; need at least {N + 1}")
    idx = np.arange(M)[:, None] + np.arange(N)[None, :]
    return g[idx], g[idx + 1]


@dataclass
class DelaySpec:
    """Delay embedding: ``delays`` stacked copies spaced by ``stride`` samples."""

    delays: int
    stride: int = 1
    mode: str = "full-state"

    def __post_init__(self):
        if self.delays < 1 or self.stride < 1:
            raise PreconditionError(f"delays and stride must be >= 1, got {self.delays}, {self.stride}")
        if self.mode not in ("full-state", "scalar-observable"):
            raise PreconditionError(f"unknown delay mode {self.mode!r}")


def delay_embed_state(traj, spec: DelaySpec, weights=None) -> SnapshotPair:
    """Delay-embedded snapshot pair.

    Column ``m`` of ``X`` stacks ``x_m, x_{m+s}, ..., x_{m+(N_d-1)s}``; ``Y``
    is the same stack started one base sample later.
    """
    traj = np.asarray(traj)
    if traj.ndim == 1:
        traj = traj[None, :]
    if spec.mode == "scalar-observable" and traj.shape[0] != 1:
        raise DimensionError(f"scalar-observable mode needs a single row, got {traj.shape[0]}")
    T = traj.shape[1]
    span = (spec.delays - 1) * spec.stride
    M = T - span - 1
    if M < 1:
        raise DimensionError(f"trajectory of length {T} too short; need at least {span + 2} samples")
    blocks = [traj[:, k * spec.stride: k * spec.stride + M + 1] for k in range(spec.delays)]
    Z = np.concatenate(blocks, axis=0)
    return SnapshotPair(Z[:, :-1], Z[:, 1:], weights)


def _fmt(v) -> str:
    if np.iscomplexobj(v):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return f"{v:.17g}"


def save_snapshots(path, pair: SnapshotPair) -> None:
    """Write a pair as CSV: header ``d,M``, then M rows of X, then M rows of Y."""
    X, Y = pair.X, pair.Y
    d, M = X.shape
    lines = [f"{d},{M}"]
    for mat in (X, Y):
        for m in range(M):
            lines.append(",".join(_fmt(v) for v in mat[:, m]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_value(tok, lineno):
    tok = tok.strip()
    try:
        v = complex(tok) if tok.endswith("j") else float(tok)
    except ValueError:
        raise ParseError(f"line {lineno}: cannot parse value {tok!r}") from None
    if not np.isfinite(v):
        raise ParseError(f"line {lineno}: non-finite value {tok!r}")
    return v


def load_snapshots(path, weights=None) -> SnapshotPair:
    """Read a pair written by `save_snapshots`."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("line 1: empty file, expected header 'd,M'")
    head = lines[0].split(",")
    try:
        d, M = (int(h) for h in head)
    except ValueError:
        raise ParseError(f"line 1: malformed header {lines[0]!r}, expected 'd,M'") from None
    if d < 1 or M < 1:
        raise ParseError(f"line 1: header needs positive d and M, got {d},{M}")
    rows = lines[1:]
    if len(rows) != 2 * M:
        raise ParseError(f"expected 2*M = {2 * M} data rows after the header, found {len(rows)}")
    vals = []
    for i, row in enumerate(rows):
        toks = row.split(",")
        if len(toks) != d:
            raise ParseError(f"line {i + 2}: expected {d} values, found {len(toks)}")
        vals.append([_parse_value(t, i + 2) for t in toks])
    arr = np.array(vals)
    return SnapshotPair(arr[:M].T.copy(), arr[M:].T.copy(), weights)


def load_weights(path, M: Optional[int] = None):
    """Read quadrature weights, one decimal per line."""
    with open(path, encoding="utf-8") as fh:
        toks = [ln.strip() for ln in fh if ln.strip()]
    w = np.array([_parse_value(t, i + 1) for i, t in enumerate(toks)], dtype=float)
    if M is not None and w.size != M:
        raise ParseError(f"expected {M} weights, found {w.size}")
    if np.any(w < 0):
        raise ParseError("weights must be nonnegative")
    return w


def save_weights(path, w) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(f"{v:.17g}\n" for v in np.asarray(w, dtype=float)))
