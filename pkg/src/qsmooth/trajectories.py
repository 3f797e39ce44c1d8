"""Measurement records and forward propagation of true and filtered states.

Times follow the convention ``t = 0`` at Alice's conditioning click, so a
pre-click window runs over negative times.  Inter-click dynamics use
``delta = 0``; the click itself is imposed by conditioning and is never
sampled.

Every trajectory draws from its own random stream seeded by
``(seed, trajectory_index)``.  Ensembles are therefore identical whatever the
chunking or the number of worker processes.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ImpossibleJumpError, IntegratorStepError, ValidationError
from .fpe import stationary_distribution
from .lindblad import JUMP_PROB_FLOOR, dissipator, model_lindblad_set, rk4_step
from .pre_solver import PreEnsemble, published_ensemble
from .qubit import (
    PROJ_E,
    PROJ_G,
    SIGMA_MINUS,
    SIGMA_PLUS,
    ModelParams,
    density_from_bloch,
    pure_state_on_circle,
    validate_density,
    wrap_angle,
)

SCHEMES = ("photon", "homodyne", "adaptive")
MAX_STEP_PROBABILITY = 0.1


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.t_end > self.t_start:
            raise ConfigError("t_end must be after t_start")
        ratio = (self.t_end - self.t_start) / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0):
            raise ConfigError(f"window is not a whole number of steps ({ratio:.6f})")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    @classmethod
    def pre_jump_window(cls, params: ModelParams, dt=1e-3, window=10.0):
        """Grid over ``[-window / (gamma + eps), 0]`` with step at most ``dt``.

        The step is shrunk slightly so the window holds a whole number of
        steps.  The last point stands for ``0-``.
        """
        length = window / params.total_rate
        n = int(np.ceil(length / dt - 1e-9))
        return cls(-length, 0.0, length / n)


@dataclass(frozen=True)
class HomodyneConfig:
    """Local-oscillator phases; zero on both channels is X-homodyne."""

    phi_gamma: float = 0.0
    phi_epsilon: float = 0.0

    @property
    def is_x_homodyne(self) -> bool:
        return self.phi_gamma == 0 and self.phi_epsilon == 0


@dataclass
class TrajectoryRecord:
    """Per-step increments of one record.

    ``dN_o`` holds Alice's click flags.  Photon and adaptive schemes fill
    ``dN_u`` with per-channel flags ``(gamma, epsilon)`` or ``(minus,
    plus)``; the homodyne scheme fills ``dW`` with ``(dW_gamma, dW_epsilon)``.
    """

    scheme: str
    grid: TimeGrid
    dN_o: np.ndarray
    dN_u: np.ndarray | None = None
    dW: np.ndarray | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        n = self.grid.n_steps
        for name in ("dN_o", "dN_u"):
            flags = getattr(self, name)
            if flags is None:
                continue
            flags = np.asarray(flags)
            if flags.shape[0] != n:
                raise ValidationError(f"{name} has {flags.shape[0]} steps, grid has {n}")
            if not np.all((flags == 0) | (flags == 1)):
                raise ValidationError(f"{name} flags must be 0 or 1")
        if self.dW is not None and np.asarray(self.dW).shape != (n, 2):
            raise ValidationError("dW must have shape (n_steps, 2)")


# --- single-step maps ------------------------------------------------------


def _excited_population(rho) -> float:
    return float(np.asarray(rho)[0, 0].real)


def alice_filter_step(rho_F, dN_o, params: ModelParams, dt) -> np.ndarray:
    """One Euler step of the filtered state given Alice's click flag."""
    rho = np.asarray(rho_F, dtype=complex)
    if dN_o:
        if _excited_population(rho) <= JUMP_PROB_FLOOR:
            raise ImpossibleJumpError("click observed from the ground state")
        return PROJ_G.copy()
    c_u = model_lindblad_set(params, include_observed=False)
    # no-click back-action of the monitored channel: -(1/2) H[delta s+ s-]
    a = params.effective_delta * PROJ_E
    ar = a @ rho
    backaction = ar + ar.conj().T - 2 * np.trace(ar).real * rho
    new = rho + dt * (dissipator(c_u, rho) - 0.5 * backaction)
    return _checked(new)


def filtered_ode_rhs(params: ModelParams, p_g: float) -> float:
    """``d p_g / dt`` for the diagonal filtered state between clicks."""
    if not 0.0 <= p_g <= 1.0:
        raise ValidationError(f"p_g must lie in [0, 1], got {p_g}")
    g, e, d = params.gamma, params.epsilon, params.effective_delta
    return g * (1 - p_g) - e * p_g + d * (1 - p_g) * p_g


def filtered_ground_path(params: ModelParams, grid: TimeGrid, p_g0=None) -> np.ndarray:
    """RK4 solution of :func:`filtered_ode_rhs` on ``grid`` (steady start by default)."""
    p = 1.0 - params.steady_excited if p_g0 is None else float(p_g0)
    out = np.empty(grid.n_steps + 1)
    out[0] = p
    f = lambda x: filtered_ode_rhs(params, min(max(x, 0.0), 1.0))  # noqa: E731
    for k in range(grid.n_steps):
        p = rk4_step(f, p, grid.dt)
        out[k + 1] = p
    return out


def _checked(rho):
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if tr <= 0:
        raise IntegratorStepError("state norm collapsed; reduce dt")
    try:
        return validate_density(rho / tr)
    except ValidationError as exc:
        raise IntegratorStepError(f"step left the state space ({exc}); reduce dt") from exc


def bob_photon_true_step(rho_T, dN_o, dN_ug, dN_ue, params: ModelParams, dt) -> np.ndarray:
    """One step of the true state when every channel is photodetected."""
    flags = (int(dN_o), int(dN_ug), int(dN_ue))
    if sum(flags) > 1:
        raise ValidationError("at most one click per step")
    rho = np.asarray(rho_T, dtype=complex)
    ops = (SIGMA_MINUS, SIGMA_MINUS, SIGMA_PLUS)
    if any(flags):
        c = ops[flags.index(1)]
        num = c @ rho @ c.conj().T
        p = np.trace(num).real
        if p <= JUMP_PROB_FLOOR:
            raise ImpossibleJumpError("click has zero probability for this state")
        return _checked(num / p)
    k = sum(c.conj().T @ c for c in model_lindblad_set(params))
    kr = k @ rho
    drift = -0.5 * (kr + kr.conj().T - 2 * np.trace(kr).real * rho)
    return _checked(rho + dt * drift)


def _homodyne_ops(params: ModelParams, cfg: HomodyneConfig):
    return (
        np.sqrt(params.gamma) * np.exp(1j * cfg.phi_gamma) * SIGMA_MINUS,
        np.sqrt(params.epsilon) * np.exp(1j * cfg.phi_epsilon) * SIGMA_PLUS,
    )


def homodyne_current(rho_T, cfg: HomodyneConfig, dW, dt, params: ModelParams, channel="gamma") -> float:
    """Current ``J`` of one channel, so that ``J dt = <c e^{i phi} + h.c.> dt + dW``."""
    if channel not in ("gamma", "epsilon"):
        raise ValidationError("channel must be 'gamma' or 'epsilon'")
    c = _homodyne_ops(params, cfg)[0 if channel == "gamma" else 1]
    rho = np.asarray(rho_T, dtype=complex)
    mean = np.trace((c + c.conj().T) @ rho).real
    return float(mean + dW / dt)


def bob_homodyne_true_step(rho_T, dW_g, dW_e, params: ModelParams, cfg: HomodyneConfig = HomodyneConfig(), dt=1e-3, method="kraus"):
    """One step of the true state under homodyne detection of both channels.

    ``method="kraus"`` applies ``M = 1 - sum c^dag c dt / 2 + sum c dY`` with
    ``dY = <c + c^dag> dt + dW`` and renormalizes.  It has the same
    increments as the Euler-Maruyama scheme to order ``dt`` and keeps pure
    states pure exactly.  ``method="euler"`` is the plain Euler-Maruyama step.
    """
    if params.effective_delta != 0:
        raise ConfigError("homodyne stepping assumes the delta -> 0 limit")
    rho = np.asarray(rho_T, dtype=complex)
    ops = _homodyne_ops(params, cfg)
    dws = (dW_g, dW_e)
    if method == "kraus":
        k = sum(c.conj().T @ c for c in ops)
        M = np.eye(2) - 0.5 * dt * k
        for c, dw in zip(ops, dws):
            mean = np.trace((c + c.conj().T) @ rho).real
            M = M + c * (mean * dt + dw)
        return _checked(M @ rho @ M.conj().T)
    if method == "euler":
        new = rho + dt * dissipator(ops, rho)
        for c, dw in zip(ops, dws):
            t = c @ rho + rho @ c.conj().T
            new = new + (t - np.trace(t).real * rho) * dw
        return _checked(new)
    raise ValidationError(f"unknown method {method!r}")


def theta_langevin_step(theta, dW_g, dW_e, params: ModelParams, dt):
    """Euler-Maruyama step of the circle angle, reduced to ``[0, 2 pi)``."""
    c, s = np.cos(theta), np.sin(theta)
    g, e = params.gamma, params.epsilon
    # same coefficients as fpe.drift_A and fpe.diffusion_B, sharing one cos/sin
    drift = s * (0.5 * (g + e) * c + (g - e))
    new = theta + drift * dt + np.sqrt(g) * (1 + c) * dW_g - np.sqrt(e) * (1 - c) * dW_e
    return wrap_angle(new)


def adaptive_true_step(index: int, jump_flags, pre: PreEnsemble = None) -> int:
    """Advance the PRE index: any click moves one step round the cycle."""
    if index not in (0, 1, 2):
        raise ValidationError(f"PRE index must be 0, 1 or 2, got {index}")
    return PreEnsemble.next_index(index) if any(jump_flags) else index


# --- sampling ---------------------------------------------------------------


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one trajectory."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


@lru_cache(maxsize=8)
def _stationary_cdf(params: ModelParams, n_points: int):
    dist = stationary_distribution(params, n_points)
    cells = dist.density * dist.dtheta
    return dist.theta, cells, np.cumsum(cells)


@lru_cache(maxsize=8)
def _cached_pre(params: ModelParams) -> PreEnsemble:
    return published_ensemble(params)


def _check_config(scheme, params, grid, pre=None):
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if params.effective_delta != 0:
        raise ConfigError("only the delta -> 0 limit is simulated")
    if scheme == "photon":
        worst = max(params.gamma, params.epsilon) * grid.dt
    elif scheme == "adaptive":
        worst = float(pre.channel_rates().max()) * grid.dt
    else:
        return
    if worst > MAX_STEP_PROBABILITY:
        raise ConfigError(f"dt too large: per-step click probability {worst:.3f} > {MAX_STEP_PROBABILITY}")


def _initial_value(scheme, u, params, initial, pre, n_points):
    """Initial hidden value from one uniform draw, or from ``initial`` if given.

    Photon: 0 for ``|e>``, 1 for ``|g>``.  Homodyne: an angle.  Adaptive: a
    PRE index.  A callable ``initial`` maps the uniform draw to a value.
    """
    if callable(initial):
        return initial(u)
    if initial is not None:
        return initial
    if scheme == "photon":
        return 0 if u < params.steady_excited else 1
    if scheme == "adaptive":
        return int(min(np.searchsorted(np.cumsum(pre.occupations), u, side="right"), 2))
    theta, cells, cdf = _stationary_cdf(params, n_points)
    target = u * cdf[-1]
    i = int(min(np.searchsorted(cdf, target, side="right"), len(cdf) - 1))
    below = cdf[i - 1] if i else 0.0
    frac = (target - below) / cells[i] if cells[i] > 0 else 0.5
    h = 2 * np.pi / len(theta)
    return float(wrap_angle(theta[i] + (frac - 0.5) * h))


def _draw_block(gens, scheme, n):
    """Draws of shape ``(m, n, 2)``: trajectory, step, channel."""
    raw = np.empty((len(gens), n, 2))
    for i, g in enumerate(gens):
        if scheme == "homodyne":
            g.standard_normal(out=raw[i])
        else:
            g.random(out=raw[i])
    return raw


def _value_to_density(scheme, values, pre):
    """Map hidden values of shape ``S`` to density matrices of shape ``S + (2, 2)``."""
    values = np.asarray(values)
    out = np.zeros(values.shape + (2, 2), dtype=complex)
    if scheme == "photon":
        excited = values == 0
        out[..., 0, 0] = excited
        out[..., 1, 1] = ~excited
    elif scheme == "adaptive":
        out[...] = pre.states()[values.astype(int)]
    else:
        th = values
        out[..., 0, 0] = 0.5 * (1 + np.cos(th))
        out[..., 1, 1] = 0.5 * (1 - np.cos(th))
        out[..., 0, 1] = 0.5 * np.sin(th)
        out[..., 1, 0] = 0.5 * np.sin(th)
    return out


def _homodyne_kets_step(a, b, dW, params, dt):
    """Vectorized Kraus step on real kets ``(a, b) = (<e|psi>, <g|psi>)``."""
    sg, se = np.sqrt(params.gamma), np.sqrt(params.epsilon)
    x = 2 * a * b
    dy_g = sg * x * dt + dW[:, 0]
    dy_e = se * x * dt + dW[:, 1]
    na = (1 - 0.5 * params.gamma * dt) * a + se * dy_e * b
    nb = (1 - 0.5 * params.epsilon * dt) * b + sg * dy_g * a
    norm = np.sqrt(na * na + nb * nb)
    if np.any(norm <= 0):
        raise IntegratorStepError("homodyne Kraus step annihilated a state; reduce dt")
    return na / norm, nb / norm


def _run_chunk(scheme, params, grid, seed, start, stop, checkpoints, initial, n_points, block):
    """Simulate trajectories ``start..stop-1``; returns hidden values at checkpoints."""
    pre = _cached_pre(params) if scheme == "adaptive" else None
    gens = [trajectory_rng(seed, i) for i in range(start, stop)]
    m = stop - start
    u0 = np.array([g.random() for g in gens])
    init = np.array([_initial_value(scheme, u, params, initial, pre, n_points) for u in u0])
    out = np.empty((m, len(checkpoints)))
    ck_pos = {k: j for j, k in enumerate(checkpoints)}
    dt = grid.dt
    flags_out = None

    if scheme == "homodyne":
        a, b = np.cos(init / 2), np.sin(init / 2)
        value = lambda: wrap_angle(2 * np.arctan2(b, a))  # noqa: E731
    else:
        state = init.astype(int)
        value = lambda: state  # noqa: E731
        if scheme == "photon":
            thresholds = np.array([[params.gamma * dt, 0.0], [0.0, params.epsilon * dt]])
        else:
            thresholds = pre.channel_rates() * dt
        th0, th1 = thresholds[:, 0].copy(), thresholds[:, 1].copy()
        n_states = len(thresholds)
        flags_out = np.zeros(m, dtype=np.int64)

    if 0 in ck_pos:
        out[:, ck_pos[0]] = value()
    n = grid.n_steps
    for k0 in range(0, n, block):
        k1 = min(k0 + block, n)
        draws = _draw_block(gens, scheme, k1 - k0)
        if scheme == "homodyne":
            draws *= np.sqrt(dt)
        for j in range(k1 - k0):
            if scheme == "homodyne":
                a, b = _homodyne_kets_step(a, b, draws[:, j], params, dt)
            else:
                clicks = (draws[:, j, 0] < th0[state]) | (draws[:, j, 1] < th1[state])
                state = (state + clicks) % n_states
                flags_out += clicks
            k = k0 + j + 1
            if k in ck_pos:
                out[:, ck_pos[k]] = value()
    return out, flags_out


@dataclass
class EnsembleResult:
    """Hidden values ``(n_trajectories, n_checkpoints)`` of an ensemble.

    Photon values are 0 (excited) or 1 (ground), homodyne values are circle
    angles, adaptive values are PRE indices.
    """

    scheme: str
    params: ModelParams
    times: np.ndarray
    values: np.ndarray
    click_counts: np.ndarray | None = None
    pre: PreEnsemble | None = field(default=None, repr=False)

    def density_matrices(self) -> np.ndarray:
        return _value_to_density(self.scheme, self.values, self.pre)

    def bloch(self) -> np.ndarray:
        from .qubit import bloch_array

        return bloch_array(self.density_matrices())


def sample_ensemble(
    scheme,
    params: ModelParams,
    grid: TimeGrid,
    n_trajectories: int,
    seed: int = 0,
    checkpoints=None,
    initial=None,
    workers: int = 1,
    chunk_size: int = 4096,
    fpe_points: int = 512,
    block: int = 512,
) -> EnsembleResult:
    """Sample ``n_trajectories`` true-state paths and keep them at ``checkpoints``.

    ``checkpoints`` are grid indices (all grid points by default).  Without
    ``initial`` each path starts from a draw of the filtered steady-state
    ensemble of its scheme; a callable ``initial`` maps a uniform variate to
    the starting value, which gives arbitrary initial distributions.  Results do not depend on ``workers`` or
    ``chunk_size``.
    """
    pre = _cached_pre(params) if scheme == "adaptive" else None
    _check_config(scheme, params, grid, pre)
    if n_trajectories < 1:
        raise ConfigError("n_trajectories must be >= 1")
    ck = list(range(grid.n_steps + 1)) if checkpoints is None else sorted(int(c) for c in checkpoints)
    if ck and (ck[0] < 0 or ck[-1] > grid.n_steps):
        raise ConfigError("checkpoint index outside the grid")
    bounds = [(s, min(s + chunk_size, n_trajectories)) for s in range(0, n_trajectories, chunk_size)]
    args = [(scheme, params, grid, seed, s, e, ck, initial, fpe_points, block) for s, e in bounds]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, *zip(*args)))
    else:
        parts = [_run_chunk(*a) for a in args]
    values = np.concatenate([p[0] for p in parts])
    clicks = None if scheme == "homodyne" else np.concatenate([p[1] for p in parts])
    return EnsembleResult(scheme, params, grid.times[ck], values, clicks, pre)


@dataclass
class TrajectorySample:
    record: TrajectoryRecord
    true_states: np.ndarray
    filtered_states: np.ndarray


def sample_trajectory(scheme, params: ModelParams, grid: TimeGrid, seed: int = 0, index: int = 0, initial=None, fpe_points=512) -> TrajectorySample:
    """One record with its true-state and filtered-state paths.

    Uses the same stream as trajectory ``index`` of :func:`sample_ensemble`,
    so the two agree path by path.  Alice never clicks inside the window.
    """
    pre = _cached_pre(params) if scheme == "adaptive" else None
    _check_config(scheme, params, grid, pre)
    rng = trajectory_rng(seed, index)
    value = _initial_value(scheme, rng.random(), params, initial, pre, fpe_points)
    n, dt = grid.n_steps, grid.dt
    draws = rng.standard_normal((n, 2)) if scheme == "homodyne" else rng.random((n, 2))
    dN_o = np.zeros(n, dtype=np.int8)

    true = np.empty((n + 1, 2, 2), dtype=complex)
    if scheme == "photon":
        rho = PROJ_E.copy() if value == 0 else PROJ_G.copy()
        true[0] = rho
        probs = np.array([params.gamma, params.epsilon]) * dt
        flags = np.zeros((n, 2), dtype=np.int8)
        for k in range(n):
            # per-channel probabilities Tr[c rho c^dag] dt
            p = probs * np.array([rho[0, 0].real, rho[1, 1].real])
            fl = (draws[k] < p).astype(np.int8)
            flags[k] = fl
            rho = bob_photon_true_step(rho, 0, fl[0], fl[1], params, dt)
            true[k + 1] = rho
        record = TrajectoryRecord(scheme, grid, dN_o, dN_u=flags)
    elif scheme == "adaptive":
        idx = int(value)
        states = pre.states()
        thresholds = pre.channel_rates() * dt
        flags = np.zeros((n, 2), dtype=np.int8)
        true[0] = states[idx]
        for k in range(n):
            flags[k] = draws[k] < thresholds[idx]
            idx = adaptive_true_step(idx, flags[k], pre)
            true[k + 1] = states[idx]
        record = TrajectoryRecord(scheme, grid, dN_o, dN_u=flags)
    else:
        dW = draws * np.sqrt(dt)
        rho = pure_state_on_circle(value)
        true[0] = rho
        for k in range(n):
            rho = bob_homodyne_true_step(rho, dW[k, 0], dW[k, 1], params, HomodyneConfig(), dt)
            true[k + 1] = rho
        record = TrajectoryRecord(scheme, grid, dN_o, dW=dW)

    if initial is None:
        rho_F = density_from_bloch((0.0, 0.0, 1 - 2 * (1 - params.steady_excited)))
    else:
        rho_F = true[0]
    filtered = np.empty_like(true)
    filtered[0] = rho_F
    for k in range(n):
        rho_F = alice_filter_step(rho_F, 0, params, dt)
        filtered[k + 1] = rho_F
    return TrajectorySample(record, true, filtered)
