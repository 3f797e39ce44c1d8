"""Fokker-Planck solver for the no-jump density of the homodyne angle.

Between observed clicks the true state lives on the x-z great circle at
angle ``theta`` and obeys ``dtheta = A dt + B_g dW_g + B_e dW_e``.  The
density ``p(theta, t)`` solves

    dp/dt = -d/dtheta [A p] + 1/2 d^2/dtheta^2 [(B_g^2 + B_e^2) p]

on a periodic grid.  Spatial derivatives are central differences whose
denominators are trig-fitted (``2 sin h`` and ``2 (1 - cos h)`` in place of
``2 h`` and ``h^2``).  The scheme stays second order, conserves mass exactly,
and is exact on the first harmonic, so the grid mean of ``cos(theta)``
obeys the same linear ODE as the filtered ``z``.
"""

from dataclasses import dataclass, field
import csv

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import ConfigError, ValidationError
from .qubit import ModelParams


def drift_A(theta, params: ModelParams):
    """Drift ``sin(theta) [(gamma+eps) cos(theta) / 2 + (gamma - eps)]``."""
    g, e = params.gamma, params.epsilon
    return np.sin(theta) * (0.5 * (g + e) * np.cos(theta) + (g - e))


def diffusion_B(theta, params: ModelParams):
    """Noise amplitudes ``(B_gamma, B_epsilon)`` of the two homodyne channels."""
    c = np.cos(theta)
    return np.sqrt(params.gamma) * (1 + c), -np.sqrt(params.epsilon) * (1 - c)


def _diffusion_sq(theta, params):
    bg, be = diffusion_B(theta, params)
    return bg**2 + be**2


def stability_dt(n_points: int, params: ModelParams) -> float:
    """Largest dt allowed by ``dt <= dtheta^2 / (2 max(B_g^2 + B_e^2))``."""
    h = 2 * np.pi / n_points
    theta = np.arange(n_points) * h
    return h * h / (2 * _diffusion_sq(theta, params).max())


@dataclass
class FpeConfig:
    """Grid and initial condition.  ``dt=None`` picks half the stability bound."""

    n_points: int = 512
    dt: float | None = None
    init_mean: float = np.pi
    init_variance: float = 0.01

    def __post_init__(self):
        if self.n_points < 128:
            raise ConfigError("n_points must be >= 128")
        if self.n_points % 2:
            raise ConfigError("n_points must be even so the grid contains 0 and pi")
        if not self.init_variance > 0:
            raise ConfigError("init_variance must be > 0")

    def resolved_dt(self, params: ModelParams) -> float:
        bound = stability_dt(self.n_points, params)
        if self.dt is None:
            return 0.5 * bound
        if self.dt > bound * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt:.3e} exceeds the stability bound {bound:.3e}")
        return self.dt


@dataclass
class ThetaDistribution:
    """Density values on ``theta_i = i * 2 pi / N``."""

    density: np.ndarray
    time: float = 0.0
    theta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        n = self.density.size
        self.theta = np.arange(n) * (2 * np.pi / n)

    @property
    def dtheta(self) -> float:
        return 2 * np.pi / self.density.size

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.dtheta)

    def expectation(self, f_values) -> float:
        return float(np.sum(np.asarray(f_values) * self.density) * self.dtheta)

    def mean_cos(self) -> float:
        return self.expectation(np.cos(self.theta))

    def mean_sin(self) -> float:
        return self.expectation(np.sin(self.theta))

    def bin_probabilities(self, n_bins: int) -> np.ndarray:
        """Probability mass in ``n_bins`` equal bins starting at ``theta = 0``.

        Each node owns the cell centred on it, so its mass is split evenly
        between the two bins that cell straddles when it sits on a bin edge.
        """
        n = self.density.size
        if n % n_bins:
            raise ValidationError(f"{n} grid points do not split into {n_bins} bins")
        half = np.repeat(self.density * self.dtheta / 2, 2)
        return np.roll(half, -1).reshape(n_bins, -1).sum(axis=1)

    def validate(self, atol=1e-6):
        if np.any(self.density < -1e-12):
            raise ValidationError("density has negative values")
        if abs(self.mass - 1) > atol:
            raise ValidationError(f"density integrates to {self.mass}")
        return self

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "density"])
            for t, p in zip(self.theta, self.density):
                w.writerow([f"{t:.9g}", f"{p:.9g}"])


def gaussian_initial(cfg: FpeConfig) -> ThetaDistribution:
    """Wrapped Gaussian centred on ``cfg.init_mean``, normalized on the grid."""
    n = cfg.n_points
    theta = np.arange(n) * (2 * np.pi / n)
    d = np.angle(np.exp(1j * (theta - cfg.init_mean)))
    p = np.exp(-0.5 * d**2 / cfg.init_variance)
    p /= p.sum() * (2 * np.pi / n)
    return ThetaDistribution(p)


def fokker_planck_operator(n_points: int, params: ModelParams, drift=None, diffusion_sq=None):
    """Sparse matrix ``L`` with ``dp/dt = L p`` on the periodic grid."""
    h = 2 * np.pi / n_points
    theta = np.arange(n_points) * h
    A = drift_A(theta, params) if drift is None else np.broadcast_to(drift, theta.shape)
    D = _diffusion_sq(theta, params) if diffusion_sq is None else np.broadcast_to(diffusion_sq, theta.shape)
    first = 2 * np.sin(h)
    second = 2 * (1 - np.cos(h))
    idx = np.arange(n_points)
    up = (idx + 1) % n_points
    down = (idx - 1) % n_points
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([up, down, idx])
    vals = np.concatenate([
        -A[up] / first + 0.5 * D[up] / second,
        A[down] / first + 0.5 * D[down] / second,
        -D / second,
    ])
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n_points, n_points))


def _clip_renormalize(p, h):
    if p.min() < 0:
        p = np.where(p < 0, 0.0, p)
        p = p / (p.sum() * h)
    return p


def fpe_step(p: ThetaDistribution, params: ModelParams, cfg: FpeConfig, operator=None) -> ThetaDistribution:
    """One RK4 step of the method-of-lines system.

    ``operator`` may be a precomputed :func:`fokker_planck_operator`.
    """
    dt = cfg.resolved_dt(params)
    L = fokker_planck_operator(p.density.size, params) if operator is None else operator
    y = p.density
    k1 = L @ y
    k2 = L @ (y + 0.5 * dt * k1)
    k3 = L @ (y + 0.5 * dt * k2)
    k4 = L @ (y + dt * k3)
    new = y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return ThetaDistribution(_clip_renormalize(new, p.dtheta), p.time + dt)


def rk4_step_matrix(L, dt) -> np.ndarray:
    """Dense matrix of one RK4 step for ``dp/dt = L p``."""
    L = L.toarray() if scipy.sparse.issparse(L) else np.asarray(L)
    Ld = dt * L
    L2 = Ld @ Ld
    L3 = L2 @ Ld
    return np.eye(L.shape[0]) + Ld + L2 / 2 + L3 / 6 + (L3 @ Ld) / 24


class _StepPowers:
    """Applies ``R^k`` by binary exponentiation, caching ``R^(2^j)``."""

    def __init__(self, R):
        self._powers = [R]

    def apply(self, k, y):
        j = 0
        while k:
            if j == len(self._powers):
                last = self._powers[-1]
                self._powers.append(last @ last)
            if k & 1:
                y = self._powers[j] @ y
            k >>= 1
            j += 1
        return y


def evolve_to(p: ThetaDistribution, params: ModelParams, cfg: FpeConfig, duration, snapshot_times=None):
    """Advance ``p`` by ``duration`` with fixed RK4 steps.

    Returns the final distribution, or a list of snapshots when
    ``snapshot_times`` (offsets from ``p.time``) is given.  Whole runs of
    steps are applied as powers of the RK4 step matrix; each target time is
    reached with at most one shortened final step.
    """
    dt = cfg.resolved_dt(params)
    L = fokker_planck_operator(p.density.size, params)
    powers = _StepPowers(rk4_step_matrix(L, dt))
    targets = [duration] if snapshot_times is None else sorted(snapshot_times)
    y = p.density.copy()
    h = p.dtheta
    t = 0.0
    snaps = []
    for target in targets:
        gap = target - t
        if gap < -1e-12:
            raise ValidationError("snapshot times must be >= 0")
        n_full = int(np.floor(gap / dt + 1e-9))
        y = powers.apply(n_full, y)
        rest = gap - n_full * dt
        if rest > 1e-12:
            y = rk4_step_matrix(L, rest) @ y
        y = _clip_renormalize(y, h)
        t = target
        snaps.append(ThetaDistribution(y.copy(), p.time + target))
    if snapshot_times is None:
        return snaps[-1]
    return snaps


def stationary_distribution(params: ModelParams, n_points: int = 512) -> ThetaDistribution:
    """Null vector of the discrete generator, normalized to unit mass."""
    L = fokker_planck_operator(n_points, params).toarray()
    h = 2 * np.pi / n_points
    # replace one equation by the normalization constraint
    M = L.copy()
    M[0, :] = h
    rhs = np.zeros(n_points)
    rhs[0] = 1.0
    p = scipy.linalg.solve(M, rhs)
    return ThetaDistribution(_clip_renormalize(p, h))
