"""Backward propagation of the retrofiltered effect.

The effect is only defined up to a positive factor.  Every consumer in this
package normalizes it away, so by default the backward pass rescales the
effect to unit trace after each step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEffectError, IntegratorStepError, ValidationError
from .lindblad import dissipator, dissipator_adjoint, model_lindblad_set
from .qubit import (
    IDENTITY,
    PSD_FLOOR,
    SIGMA_MINUS,
    ModelParams,
    completeness_defect,
)


@dataclass(frozen=True)
class RetroConfig:
    """``zeta`` is the ostensible jump rate; it only changes the effect's norm."""

    zeta: float = 0.0
    renormalize_each_step: bool = True

    def __post_init__(self):
        if not self.zeta >= 0:
            raise ValidationError(f"zeta must be >= 0, got {self.zeta}")


def alice_jump_operator(params: ModelParams) -> np.ndarray:
    """Operator applied on an observed click.

    In the delta -> 0 limit the rate prefactor is dropped; only the direction
    ``s-`` matters for the normalized quantities.
    """
    if params.delta_zero_limit or params.delta == 0:
        return SIGMA_MINUS
    return np.sqrt(params.delta) * SIGMA_MINUS


def _no_jump_generator_terms(params: ModelParams):
    c_u = model_lindblad_set(params, include_observed=False)
    d = params.effective_delta
    a = d * np.array([[1, 0], [0, 0]], dtype=complex)
    return c_u, a


def _zeta_factor(cfg: RetroConfig, dt):
    # the -zeta part of the generator is a scalar, so it is applied exactly
    return np.exp(cfg.zeta * dt)


def effect_backward_step(effect, dN_o, params: ModelParams, cfg: RetroConfig = RetroConfig(), dt=1e-3):
    """One backward Euler step ``E(t) <- E(t + dt)`` of the effect equation.

    On a click step only the jump map ``J^dag E J`` is applied; it is the
    adjoint of the photon-counting click operator ``sqrt(dt) J``.
    """
    E = np.asarray(effect, dtype=complex)
    if dN_o:
        # click steps apply the jump map alone, which keeps E positive
        J = alice_jump_operator(params)
        new = J.conj().T @ E @ J
        if cfg.zeta > 0:
            new = new / cfg.zeta
    else:
        c_u, a = _no_jump_generator_terms(params)
        new = _zeta_factor(cfg, dt) * (E + dt * (dissipator_adjoint(c_u, E) - 0.5 * (a @ E + E @ a)))
    new = 0.5 * (new + new.conj().T)
    _check_effect_step(new)
    if cfg.renormalize_each_step:
        tr = np.trace(new).real
        if tr <= 0:
            raise DegenerateEffectError("effect vanished during backward step")
        new = new / tr
    return new


def _check_effect_step(E):
    w = np.linalg.eigvalsh(E)
    if w[-1] <= 0:
        raise DegenerateEffectError("effect vanished during backward step")
    if w[0] < PSD_FLOOR * w[-1]:
        raise IntegratorStepError(f"effect lost positivity (eigenvalue {w[0]:.3e}); reduce dt")


def classical_effect_backward_step(e_vec, dN_o, params: ModelParams, cfg: RetroConfig = RetroConfig(), dt=1e-3):
    """Diagonal form of :func:`effect_backward_step` on ``(E_e, E_g)``.

    The ``zeta`` term is the same exact scalar factor as in the full
    operator step, so the two routes agree for any ``zeta``.
    """
    E_e, E_g = (float(v) for v in e_vec)
    g, eps, d, z = params.gamma, params.epsilon, params.effective_delta, cfg.zeta
    f = _zeta_factor(cfg, dt)
    new_g = f * (E_g + dt * eps * (E_e - E_g))
    new_e = f * (E_e + dt * (g * (E_g - E_e) - d * E_e))
    if dN_o:
        scale = 1.0 if (params.delta_zero_limit or params.delta == 0) else params.delta
        if z > 0:
            scale /= z
        new_e, new_g = scale * E_g, 0.0
    out = np.array([new_e, new_g])
    if cfg.renormalize_each_step:
        total = out.sum()
        if total <= 0:
            raise DegenerateEffectError("classical effect vanished")
        out = out / total
    return out


def effect_jump_update(effect) -> np.ndarray:
    """Pre-click effect from the post-click one: ``s+ E s-`` at unit trace."""
    E = np.asarray(effect, dtype=complex)
    pre = SIGMA_MINUS.conj().T @ E @ SIGMA_MINUS
    tr = np.trace(pre).real
    if tr <= 1e-300:
        raise DegenerateEffectError("<g|E|g> = 0: no click is possible")
    return pre / tr


def backward_pass(jumps, params: ModelParams, cfg: RetroConfig = RetroConfig(), dt=1e-3, final_effect=None):
    """Effects on a grid of ``len(jumps) + 1`` points, ending at ``final_effect``.

    ``jumps[k]`` flags an observed click in ``[t_k, t_k + dt)``.
    """
    jumps = np.asarray(jumps)
    n = len(jumps)
    out = np.empty((n + 1, 2, 2), dtype=complex)
    E = IDENTITY / 2 if final_effect is None else np.asarray(final_effect, dtype=complex)
    out[n] = E
    for k in range(n - 1, -1, -1):
        E = effect_backward_step(E, jumps[k], params, cfg, dt)
        out[k] = E
    return out


def pre_jump_effect_path(params: ModelParams, n_steps: int, dt: float, cfg: RetroConfig = RetroConfig()):
    """Effects on ``n_steps + 1`` grid points ending just before an observed click.

    The last entry is ``|e><e|`` (the click seen from an uninformative
    future); earlier entries follow the no-click backward dynamics.
    """
    final = effect_jump_update(IDENTITY)
    return backward_pass(np.zeros(n_steps, dtype=int), params, cfg, dt, final_effect=final)


def filtered_unnormalized_step(rho_tilde, dN_o, params: ModelParams, cfg: RetroConfig = RetroConfig(), dt=1e-3):
    """Forward map that is the exact adjoint of :func:`effect_backward_step`.

    With ``renormalize_each_step`` off on the backward side,
    ``Tr[rho~(t) E(t)]`` is then constant along a record.
    """
    rho = np.asarray(rho_tilde, dtype=complex)
    if dN_o:
        J = alice_jump_operator(params)
        jumped = J @ rho @ J.conj().T
        return jumped / cfg.zeta if cfg.zeta > 0 else jumped
    c_u, a = _no_jump_generator_terms(params)
    return _zeta_factor(cfg, dt) * (rho + dt * (dissipator(c_u, rho) - 0.5 * (a @ rho + rho @ a)))


def forward_backward_trace(rho_tilde, effect) -> float:
    """``Tr[rho~_F E_R]``, proportional to the probability of the whole record."""
    return float(np.trace(np.asarray(rho_tilde) @ np.asarray(effect)).real)


# --- Co-diagonality oracle -------------------------------------------------


def kraus_no_jump(c_set, dt) -> np.ndarray:
    """``sqrt(1 - dt sum c^dag c)``, so the photon-counting set is exactly complete."""
    k = sum(c.conj().T @ c for c in c_set)
    w, v = np.linalg.eigh(IDENTITY - dt * k)
    if w[0] < 0:
        raise ValidationError("dt too large for a no-jump Kraus operator")
    return (v * np.sqrt(w)) @ v.conj().T


def photon_counting_operators(c_set, dt):
    """Complete one-step instrument for photon counting on every channel."""
    ops = [kraus_no_jump(c_set, dt)]
    ops += [np.sqrt(dt) * c for c in c_set]
    return ops


def homodyne_operators(c_set, dt, n_nodes=9):
    """Discretized one-step homodyne instrument on every channel.

    Outcomes are Gauss-Hermite nodes of the current ``dY``; the set is made
    exactly complete by a final ``S^{-1/2}`` correction.
    """
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    weights = weights / weights.sum()
    half = 0.5 * sum(c.conj().T @ c for c in c_set)
    ops = []
    for combo in np.ndindex(*([n_nodes] * len(c_set))):
        w = np.prod([weights[i] for i in combo])
        m = IDENTITY - half * dt
        for c, i in zip(c_set, combo):
            m = m + c * np.sqrt(dt) * nodes[i]
        ops.append(np.sqrt(w) * m)
    s = sum(m.conj().T @ m for m in ops)
    ws, vs = np.linalg.eigh(s)
    s_inv_half = (vs / np.sqrt(ws)) @ vs.conj().T
    return [m @ s_inv_half for m in ops]


def codiagonality_oracle(M_o, M_u_set, basis=None, rng=None, n_random=5, rtol=1e-12):
    """Check whether a one-step instrument keeps true states in an orthogonal basis.

    Returns ``(ok, report)``.  ``ok`` is true when every product
    ``M_o M_u`` maps each basis state onto a single basis state, and when one
    forward filter step and one backward effect step keep random diagonal
    inputs diagonal.
    """
    M_o = np.asarray(M_o, dtype=complex)
    M_u_set = [np.asarray(m, dtype=complex) for m in M_u_set]
    defect = completeness_defect(M_u_set)
    if defect > 1e-9:
        raise ValidationError(f"unobserved operator set is incomplete (defect {defect:.2e})")
    U = IDENTITY if basis is None else np.asarray(basis, dtype=complex)
    rng = np.random.default_rng(0) if rng is None else rng

    worst_column = 0.0
    for M_u in M_u_set:
        T = U.conj().T @ (M_o @ M_u) @ U
        for j in range(T.shape[1]):
            col = np.abs(T[:, j])
            big = col.max()
            if big == 0:
                continue
            # second largest entry relative to the largest
            worst_column = max(worst_column, np.sort(col)[-2] / big)
    maps_ok = worst_column <= rtol

    worst_fwd = 0.0
    worst_bwd = 0.0
    for _ in range(n_random):
        diag = U @ np.diag(rng.uniform(0.1, 1.0, size=2)) @ U.conj().T
        fwd = sum(M_o @ m @ diag @ m.conj().T @ M_o.conj().T for m in M_u_set)
        bwd = sum(m.conj().T @ M_o.conj().T @ diag @ M_o @ m for m in M_u_set)
        for out, key in ((fwd, "fwd"), (bwd, "bwd")):
            d = U.conj().T @ out @ U
            off = np.abs(d - np.diag(np.diag(d))).max() / max(np.abs(d).max(), 1e-300)
            if key == "fwd":
                worst_fwd = max(worst_fwd, off)
            else:
                worst_bwd = max(worst_bwd, off)
    report = {
        "completeness_defect": defect,
        "max_column_spread": float(worst_column),
        "forward_offdiag": float(worst_fwd),
        "backward_offdiag": float(worst_bwd),
        "maps_ok": bool(maps_ok),
    }
    ok = maps_ok and worst_fwd <= 1e-10 and worst_bwd <= 1e-10
    return ok, report
