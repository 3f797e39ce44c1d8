"""Unconditional Lindblad dynamics and the superoperators used by the
conditional equations.
"""

import numpy as np

from .errors import ImpossibleJumpError
from .qubit import SIGMA_MINUS, SIGMA_PLUS, ModelParams

JUMP_PROB_FLOOR = 1e-300


def model_lindblad_set(params: ModelParams, include_observed=True):
    """Jump operators ``(sqrt(delta) s-, sqrt(gamma) s-, sqrt(epsilon) s+)``.

    The observed channel uses the effective (inter-jump) ``delta``; with
    ``include_observed=False`` only the two unobserved channels are returned.
    """
    unobserved = (
        np.sqrt(params.gamma) * SIGMA_MINUS,
        np.sqrt(params.epsilon) * SIGMA_PLUS,
    )
    if not include_observed:
        return unobserved
    return (np.sqrt(params.effective_delta) * SIGMA_MINUS,) + unobserved


def observed_operator(params: ModelParams, delta=None) -> np.ndarray:
    """Alice's jump operator ``sqrt(delta) s-``."""
    d = params.effective_delta if delta is None else delta
    return np.sqrt(d) * SIGMA_MINUS


def _as_list(a_list):
    if isinstance(a_list, np.ndarray) and a_list.ndim == 2:
        return [a_list]
    return list(a_list)


def dissipator(c_set, rho) -> np.ndarray:
    """``sum_l c rho c^dag - {c^dag c, rho} / 2``."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    for c in _as_list(c_set):
        cd = c.conj().T
        cdc = cd @ c
        out += c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
    return out


def dissipator_adjoint(c_set, effect) -> np.ndarray:
    """Heisenberg-picture dissipator ``sum_l c^dag E c - {c^dag c, E} / 2``."""
    effect = np.asarray(effect, dtype=complex)
    out = np.zeros_like(effect)
    for c in _as_list(c_set):
        cd = c.conj().T
        cdc = cd @ c
        out += cd @ effect @ c - 0.5 * (cdc @ effect + effect @ cdc)
    return out


def classical_rate_rhs(params: ModelParams, p_g: float) -> float:
    """Rate equation for the ground population: ``(delta+gamma) p_e - epsilon p_g``."""
    return (params.effective_delta + params.gamma) * (1.0 - p_g) - params.epsilon * p_g


def classical_steady_ground(params: ModelParams) -> float:
    d = params.effective_delta
    return (params.gamma + d) / (params.gamma + d + params.epsilon)


def superop_G(a, rho) -> np.ndarray:
    """Jump superoperator ``a rho a^dag / Tr[a rho a^dag] - rho``."""
    rho = np.asarray(rho, dtype=complex)
    num = a @ rho @ a.conj().T
    p = np.trace(num).real
    if p <= JUMP_PROB_FLOOR:
        raise ImpossibleJumpError("jump has zero probability for this state")
    return num / p - rho


def superop_H(a_list, rho) -> np.ndarray:
    """Innovation superoperator ``sum_k a rho + rho a^dag - Tr[a rho + rho a^dag] rho``."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    for a in _as_list(a_list):
        t = a @ rho + rho @ a.conj().T
        out += t - np.trace(t) * rho
    return out


def superop_G_tilde(a, x) -> np.ndarray:
    """Linear jump superoperator ``a X a^dag - X``."""
    x = np.asarray(x, dtype=complex)
    return a @ x @ a.conj().T - x


def superop_H_tilde(a_list, x) -> np.ndarray:
    """Linear innovation superoperator ``sum_k a X + X a^dag``."""
    x = np.asarray(x, dtype=complex)
    out = np.zeros_like(x)
    for a in _as_list(a_list):
        out += a @ x + x @ a.conj().T
    return out


def rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_master_equation(rho0, c_set, times, dt):
    """Integrate the Lindblad equation with RK4 and sample it at ``times``.

    ``times`` must be non-decreasing and start at or after 0; the returned
    array has shape ``(len(times), 2, 2)``.
    """
    c_set = _as_list(c_set)
    times = np.asarray(times, dtype=float)
    rho = np.asarray(rho0, dtype=complex).copy()
    out = np.empty((len(times), 2, 2), dtype=complex)
    t = 0.0
    for i, target in enumerate(times):
        while t < target - 1e-12:
            h = min(dt, target - t)
            rho = rk4_step(lambda r: dissipator(c_set, r), rho, h)
            t += h
        out[i] = rho
    return out
