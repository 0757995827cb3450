"""Built-in dynamical systems, a fixed-step RK4 sampler and sensor noise."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError, PreconditionError


@dataclass
class OdeSystem:
    """Autonomous ODE ``dx/dt = field(x)``.

    ``field`` must accept arrays of shape ``(dim,)`` or ``(dim, K)`` and
    act column-wise, so ensembles can be integrated together.
    """

    dim: int
    field: Callable[[np.ndarray], np.ndarray]
    name: str
    initial: Optional[Callable[[np.random.Generator], np.ndarray]] = None

    def __call__(self, x):
        return self.field(x)


@dataclass
class TrajectoryConfig:
    """Sampling parameters.

    ``burn_in`` counts discarded output samples, each of length ``dt``.
    When ``initial`` is None the system's default initial condition is used
    (drawn with ``seed`` if it is random).
    """

    dt: float
    steps: int
    burn_in: int = 0
    initial: Optional[np.ndarray] = None
    seed: Optional[int] = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise PreconditionError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise PreconditionError(f"steps must be >= 1, got {self.steps}")
        if self.burn_in < 0:
            raise PreconditionError(f"burn_in must be >= 0, got {self.burn_in}")


def lorenz(sigma=10.0, rho=28.0, beta=8.0 / 3.0) -> OdeSystem:
    """Lorenz system with the classical parameters."""

    def f(x):
        return np.stack([sigma * (x[1] - x[0]), x[0] * (rho - x[2]) - x[1], x[0] * x[1] - beta * x[2]])

    return OdeSystem(3, f, "lorenz", lambda rng: np.array([1.0, 1.0, 1.0]))


def duffing(damped: bool = False, delta: float = 0.5) -> OdeSystem:
    """Duffing oscillator ``x'' = x - x^3`` with optional damping ``-delta x'``."""
    c = delta if damped else 0.0

    def f(x):
        return np.stack([x[1], -c * x[1] + x[0] - x[0] ** 3])

    return OdeSystem(2, f, "duffing-damped" if damped else "duffing",
                     lambda rng: rng.uniform(-2.0, 2.0, size=2))


def rossler(a=0.1, b=0.1, c=14.0) -> OdeSystem:
    """Rossler system."""

    def f(x):
        return np.stack([-x[1] - x[2], x[0] + a * x[1], b + x[2] * (x[0] - c)])

    return OdeSystem(3, f, "rossler", lambda rng: np.array([1.0, 1.0, 0.0]))


def duffing_hamiltonian(x):
    """Conserved energy ``y^2 - x^2 + x^4/2`` of the undamped Duffing field.

    This is twice ``y^2/2 - x^2/2 + x^4/4``; its time derivative along
    ``(y, x - x^3)`` vanishes identically.
    """
    x = np.asarray(x)
    return x[1] ** 2 - x[0] ** 2 + x[0] ** 4 / 2


SYSTEMS = {
    "lorenz": lorenz,
    "duffing": lambda: duffing(False),
    "duffing-damped": lambda: duffing(True),
    "rossler": rossler,
}


def get_system(name: str) -> OdeSystem:
    """Look up a built-in ODE system by name."""
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise ConfigError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None


def rk4_step(sys, x, dt: float):
    """One classical fourth-order Runge-Kutta step."""
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    f = sys.field if isinstance(sys, OdeSystem) else sys
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    out = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite state after RK4 step of size {dt}")
    return out


def _integrate(sys, x, dt, steps, substeps, burn_in):
    h = dt / substeps
    for _ in range(burn_in * substeps):
        x = rk4_step(sys, x, h)
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for n in range(steps):
        for _ in range(substeps):
            x = rk4_step(sys, x, h)
        out[n + 1] = x
    return out


def sample_trajectory(sys: OdeSystem, cfg: TrajectoryConfig, substeps: int = 1):
    """Sample a trajectory at spacing ``cfg.dt``.

    Returns
    -------
    (dim, steps + 1) ndarray
        Columns are the state at times ``0, dt, 2 dt, ...`` after burn-in.
    """
    if substeps < 1:
        raise PreconditionError(f"substeps must be >= 1, got {substeps}")
    if cfg.initial is not None:
        x0 = np.asarray(cfg.initial, dtype=float)
    else:
        x0 = np.asarray(sys.initial(np.random.default_rng(cfg.seed)), dtype=float)
    if x0.shape != (sys.dim,):
        raise DimensionError(f"initial state has shape {x0.shape}, expected ({sys.dim},)")
    return _integrate(sys, x0, cfg.dt, cfg.steps, substeps, cfg.burn_in).T


def sample_ensemble(sys: OdeSystem, initials, dt: float, steps: int, substeps: int = 1):
    """Integrate many initial conditions together.

    Parameters
    ----------
    initials : (dim, K) array_like
        One initial condition per column.

    Returns
    -------
    (K, dim, steps + 1) ndarray
        Trajectory of each initial condition.
    """
    x0 = np.asarray(initials, dtype=float)
    if x0.ndim != 2 or x0.shape[0] != sys.dim:
        raise DimensionError(f"initials must have shape ({sys.dim}, K), got {x0.shape}")
    out = _integrate(sys, x0, dt, steps, substeps, 0)
    return np.transpose(out, (2, 1, 0))


def add_sensor_noise(X, level: float, seed=None):
    """Add i.i.d. Gaussian noise with std ``level`` times the RMS entry size.

    Complex data receive circular noise with the same total variance per
    entry.
    """
    if level < 0:
        raise PreconditionError(f"noise level must be nonnegative, got {level}")
    X = np.asarray(X)
    if level == 0 or X.size == 0:
        return X.copy()
    rng = np.random.default_rng(seed)
    std = level * np.linalg.norm(X) / np.sqrt(X.size)
    if np.iscomplexobj(X):
        N = (rng.standard_normal(X.shape) + 1j * rng.standard_normal(X.shape)) * (std / np.sqrt(2))
    else:
        N = rng.standard_normal(X.shape) * std
    return X + N


@dataclass
class LinearSpectralSystem:
    """Actuated linear system that is diagonal in 2-D Fourier space.

    Parameters
    ----------
    n : int
        Grid side; the state is a flattened ``n x n`` field.
    modes : list of ((int, int), complex)
        Wavenumber index and continuous-time eigenvalue ``mu``; the discrete
        multiplier is ``exp(mu dt)``.
    input_direction : dict
        Wavenumber index to complex actuation coefficient.
    dt : float
        Sampling step.
    real_output : bool
        Require conjugate-symmetric placement and return real states.
    """

    n: int
    modes: list
    input_direction: dict
    dt: float
    real_output: bool = True
    Ahat: np.ndarray = field(init=False, repr=False)
    Bhat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n
        self.Ahat = np.zeros((n, n), dtype=complex)
        self.Bhat = np.zeros((n, n), dtype=complex)
        for (i, j), mu in self.modes:
            self.Ahat[i % n, j % n] = np.exp(mu * self.dt)
        for (i, j), b in self.input_direction.items():
            self.Bhat[i % n, j % n] = b
        if self.real_output:
            for M, name in ((self.Ahat, "mode"), (self.Bhat, "input")):
                mirror = np.conj(np.roll(np.flip(M, (0, 1)), 1, axis=(0, 1)))
                if not np.allclose(M, mirror, rtol=0, atol=1e-14):
                    raise ConfigError(f"{name} placement is not conjugate symmetric; "
                                      "real output requires (k, conj) pairs at -k")

    @property
    def state_dim(self) -> int:
        return self.n * self.n

    def eigenvalues(self):
        """Discrete-time eigenvalues of the nonzero modes."""
        return np.array([np.exp(mu * self.dt) for _, mu in self.modes])


def linear_spectral_step(sys: LinearSpectralSystem, x, u):
    """Advance ``x`` one step: FFT, diagonal update plus actuation, inverse FFT."""
    x = np.asarray(x)
    if x.shape != (sys.state_dim,):
        raise DimensionError(f"state must have length {sys.state_dim}, got shape {x.shape}")
    xh = np.fft.fft2(x.reshape(sys.n, sys.n))
    xh = sys.Ahat * xh + sys.Bhat * complex(u)
    out = np.fft.ifft2(xh).reshape(-1)
    return out.real if sys.real_output else out


def simulate_linear_spectral(sys: LinearSpectralSystem, x0, inputs):
    """Trajectory ``(n^2, len(inputs) + 1)`` driven by a scalar input sequence."""
    inputs = np.asarray(inputs).reshape(-1)
    traj = np.empty((sys.state_dim, inputs.size + 1), dtype=float if sys.real_output else complex)
    traj[:, 0] = x0
    for k, u in enumerate(inputs):
        traj[:, k + 1] = linear_spectral_step(sys, traj[:, k], u)
    return traj


def torus_system(n: int = 32, pairs: int = 5, dt: float = 0.01, seed=0,
                 omega=(1.0, 10.0), gamma=(0.01, 0.1), max_wavenumber: int = 4):
    """Random conjugate-symmetric torus system with ``pairs`` damped oscillatory modes.

    Returns
    -------
    sys : LinearSpectralSystem
    x0 : (n^2,) ndarray
        Real initial state supported on the active modes.
    """
    rng = np.random.default_rng(seed)
    if n < 2 * max_wavenumber + 2:
        raise ConfigError(f"grid {n} too small for wavenumbers up to {max_wavenumber}")
    chosen = set()
    modes, bdir, coef = [], {}, {}
    while len(modes) < 2 * pairs:
        k = tuple(int(v) for v in rng.integers(-max_wavenumber, max_wavenumber + 1, size=2))
        mk = (-k[0], -k[1])
        if k == mk or k in chosen or mk in chosen:
            continue
        chosen.update((k, mk))
        mu = -rng.uniform(*gamma) + 1j * rng.uniform(*omega)
        b = rng.standard_normal() + 1j * rng.standard_normal()
        c = rng.standard_normal() + 1j * rng.standard_normal()
        modes += [(k, mu), (mk, np.conj(mu))]
        bdir[k], bdir[mk] = b, np.conj(b)
        coef[k], coef[mk] = c, np.conj(c)
    sys = LinearSpectralSystem(n, modes, bdir, dt)
    xh = np.zeros((n, n), dtype=complex)
    for (i, j), c in coef.items():
        xh[i % n, j % n] = c * n * n
    x0 = np.fft.ifft2(xh).real.reshape(-1)
    return sys, x0
