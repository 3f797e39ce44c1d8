"""Fast invariant checks behind ``qsmooth validate``.

Each check returns ``(name, passed, detail)``.  The suite takes a few
seconds and needs no test framework.
"""

import numpy as np

from .fpe import stationary_distribution
from .pre_solver import published_ensemble
from .qubit import PROJ_E, ModelParams, bloch_array, density_from_bloch
from .retrofilter import (
    RetroConfig,
    backward_pass,
    codiagonality_oracle,
    effect_backward_step,
    filtered_unnormalized_step,
    forward_backward_trace,
    homodyne_operators,
    photon_counting_operators,
)
from .lindblad import model_lindblad_set
from .scenarios import ScenarioConfig, pre_jump_analysis
from .smoother import expected_cost_filtered_under_smoothing, smoothed_cost, swv_negativity_scan
from .trajectories import HomodyneConfig, alice_filter_step, bob_homodyne_true_step


def _steady_filter(params):
    rho = density_from_bloch((0, 0, 2 * params.steady_excited - 1))
    err = np.abs(alice_filter_step(rho, 0, params, 1e-3) - rho).max()
    return "steady filtered state is stationary", err < 1e-12, f"max change {err:.1e}"


def _pre_mixture(params):
    pre = published_ensemble(params)
    target = np.diag([params.steady_excited, 1 - params.steady_excited])
    err = np.abs(pre.mixture() - target).max()
    return "PRE mixture equals filtered steady state", err < 1e-6, f"max deviation {err:.1e}"


def _fpe_mean(params):
    p = stationary_distribution(params)
    err = abs(p.mean_cos() - (2 * params.steady_excited - 1))
    return "FPE stationary E[cos] matches filtered z", err < 1e-8, f"error {err:.1e}"


def _forward_backward(params, rng):
    n, dt = 400, 1e-3
    jumps = (rng.random(n) < 0.01).astype(int)
    p_obs = ModelParams(params.gamma, params.epsilon, 1.0, delta_zero_limit=False)
    cfg = RetroConfig(renormalize_each_step=False)
    effects = backward_pass(jumps, p_obs, cfg, dt)
    rho = density_from_bloch((0, 0, 0.2))
    traces = [forward_backward_trace(rho, effects[0])]
    for k in range(n):
        rho = filtered_unnormalized_step(rho, jumps[k], p_obs, cfg, dt)
        traces.append(forward_backward_trace(rho, effects[k + 1]))
    spread = (max(traces) - min(traces)) / abs(traces[0])
    return "forward-backward trace is constant", spread < 1e-6, f"relative spread {spread:.1e}"


def _codiagonal(params):
    c_u = model_lindblad_set(params, include_observed=False)
    m_o = np.eye(2)
    ok_photon, _ = codiagonality_oracle(m_o, photon_counting_operators(c_u, 1e-3))
    ok_hom, _ = codiagonality_oracle(m_o, homodyne_operators(c_u, 1e-3))
    return "co-diagonality: photon yes, homodyne no", ok_photon and not ok_hom, f"photon={ok_photon} homodyne={ok_hom}"


def _classical(params):
    a = pre_jump_analysis(ScenarioConfig(gamma=params.gamma, epsilon=params.epsilon), ("classical",))
    wp_end = a.rho_S_classical[-1, 0, 0].real
    pur = 1 - smoothed_cost(a.rho_S_classical)
    excess = expected_cost_filtered_under_smoothing(a.rho_F, a.rho_S_classical) - smoothed_cost(a.rho_S_classical)
    ok = wp_end >= 0.99 and abs(pur.min() - 0.5) <= 0.02 and excess.min() >= -1e-12
    return "classical smoothing reaches |e>, purity dips to 1/2, smoothing wins", ok, f"wp_S(0-)={wp_end:.4f} min purity={pur.min():.4f}"


def _swv():
    res = swv_negativity_scan()
    return "SWV state can be indefinite", res.min_eigenvalue < -1e-3, f"min eigenvalue {res.min_eigenvalue:.3f}"


def _homodyne_circle(params, rng):
    rho = density_from_bloch((0, 0, -1))
    worst = 0.0
    for _ in range(1000):
        dw = rng.standard_normal(2) * np.sqrt(1e-3)
        rho = bob_homodyne_true_step(rho, dw[0], dw[1], params, HomodyneConfig(), 1e-3)
        worst = max(worst, abs(bloch_array(rho)[1]))
    pur = np.trace(rho @ rho).real
    return "homodyne true state stays pure on the x-z circle", worst < 1e-10 and abs(pur - 1) < 1e-9, f"max |y| {worst:.1e}"


def _norm_free(params):
    E = PROJ_E + 0.3 * np.eye(2)
    a = effect_backward_step(E, 0, params, dt=1e-3)
    b = effect_backward_step(7.5 * E, 0, params, dt=1e-3)
    err = np.abs(a - b).max()
    return "effect steps are norm-free", err < 1e-9, f"difference {err:.1e}"


def run_invariant_suite(params: ModelParams = ModelParams(), seed: int = 0):
    rng = np.random.default_rng(seed)
    return [
        _steady_filter(params),
        _pre_mixture(params),
        _fpe_mean(params),
        _forward_backward(params, rng),
        _codiagonal(params),
        _classical(params),
        _swv(),
        _homodyne_circle(params, rng),
        _norm_free(params),
    ]
