import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import filtered_z
from qsmooth.errors import ConfigError, ImpossibleJumpError, ValidationError
from qsmooth.fpe import diffusion_B, drift_A
from qsmooth.lindblad import evolve_master_equation, model_lindblad_set
from qsmooth.qubit import (
    MAXIMALLY_MIXED,
    PROJ_E,
    PROJ_G,
    ModelParams,
    bloch_array,
    density_from_bloch,
    pure_state_on_circle,
    purity,
    wrap_angle,
)
from qsmooth.trajectories import (
    HomodyneConfig,
    TimeGrid,
    TrajectoryRecord,
    adaptive_true_step,
    alice_filter_step,
    bob_homodyne_true_step,
    bob_photon_true_step,
    filtered_ground_path,
    filtered_ode_rhs,
    homodyne_current,
    sample_ensemble,
    sample_trajectory,
    theta_langevin_step,
)


# --- grid and record types ---


def test_time_grid():
    g = TimeGrid(-1.0, 0.0, 0.25)
    assert g.n_steps == 4 and np.allclose(g.times, [-1, -0.75, -0.5, -0.25, 0])
    with pytest.raises(ConfigError):
        TimeGrid(0.0, 1.0, 0.3)
    with pytest.raises(ConfigError):
        TimeGrid(0.0, 1.0, 0.0)
    w = TimeGrid.pre_jump_window(ModelParams(), 1e-3)
    assert w.t_start == pytest.approx(-10 / 1.05) and w.t_end == 0.0 and w.dt <= 1e-3


def test_record_validation():
    g = TimeGrid(0.0, 1.0, 0.5)
    TrajectoryRecord("photon", g, np.zeros(2), dN_u=np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        TrajectoryRecord("photon", g, np.array([0, 2]))
    with pytest.raises(ValidationError):
        TrajectoryRecord("homodyne", g, np.zeros(2), dW=np.zeros((3, 2)))
    with pytest.raises(ValidationError):
        TrajectoryRecord("nope", g, np.zeros(2))


# --- Alice's filter ---


@pytest.mark.parametrize("p_e", [0.0001, 0.3, 1.0])
def test_alice_click_collapses_to_ground(params, p_e):
    rho = np.diag([p_e, 1 - p_e]).astype(complex)
    assert np.array_equal(alice_filter_step(rho, 1, params, 1e-3), PROJ_G)


def test_alice_click_from_ground_is_impossible(params):
    with pytest.raises(ImpossibleJumpError):
        alice_filter_step(PROJ_G, 1, params, 1e-3)


def test_alice_no_click_follows_rate_equation():
    p = ModelParams(delta=0.4, delta_zero_limit=False)
    for base in (ModelParams(), p):
        rho = np.diag([0.3, 0.7]).astype(complex)
        out = alice_filter_step(rho, 0, base, 1e-3)
        assert out[1, 1].real == pytest.approx(0.7 + 1e-3 * filtered_ode_rhs(base, 0.7), abs=1e-15)
        assert abs(out[0, 1]) == 0


def test_alice_steady_state_is_fixed(params):
    rho = np.diag([1 / 21, 20 / 21]).astype(complex)
    assert np.abs(alice_filter_step(rho, 0, params, 1e-3) - rho).max() < 1e-12


def test_filtered_ode_rhs_examples(params):
    assert filtered_ode_rhs(params, 1 / 1.05) == pytest.approx(0, abs=1e-15)
    assert filtered_ode_rhs(params, 1.0) == pytest.approx(-0.05)
    root = scipy.optimize.brentq(lambda p: filtered_ode_rhs(params, p), 0, 1, xtol=1e-15)
    assert 1 - root == pytest.approx(1 / 21, abs=1e-12)
    finite = ModelParams(delta=0.2, delta_zero_limit=False)
    assert filtered_ode_rhs(finite, 0.5) == pytest.approx(0.5 - 0.025 + 0.05)
    with pytest.raises(ValidationError):
        filtered_ode_rhs(params, 1.5)


def test_filtered_path_matches_closed_form(params):
    g = TimeGrid(0.0, 5.0, 1e-3)
    p_g = filtered_ground_path(params, g, p_g0=0.2)
    z = 1 - 2 * p_g
    assert np.allclose(z, filtered_z(g.times, 1 - 0.4, params.gamma, params.epsilon), atol=1e-12)


# --- Bob's photon detection ---


def test_photon_true_step_examples(params):
    assert np.array_equal(bob_photon_true_step(PROJ_G, 0, 0, 0, params, 1e-3), PROJ_G)
    assert np.array_equal(bob_photon_true_step(PROJ_E, 0, 0, 0, params, 1e-3), PROJ_E)
    assert np.allclose(bob_photon_true_step(PROJ_G, 0, 0, 1, params, 1e-3), PROJ_E)
    assert np.allclose(bob_photon_true_step(PROJ_E, 0, 1, 0, params, 1e-3), PROJ_G)
    with pytest.raises(ImpossibleJumpError):
        bob_photon_true_step(PROJ_G, 0, 1, 0, params, 1e-3)
    with pytest.raises(ValidationError):
        bob_photon_true_step(PROJ_E, 0, 1, 1, params, 1e-3)


# --- homodyne ---


def test_homodyne_drift_at_ground(params):
    dt = 1e-3
    out = bob_homodyne_true_step(PROJ_G, 0.0, 0.0, params, dt=dt, method="euler")
    assert bloch_array(out)[2] - (-1) == pytest.approx(2 * params.epsilon * dt, rel=1e-9)
    # the Kraus step reproduces the same mean increment
    rng = np.random.default_rng(1)
    dws = rng.standard_normal((20000, 2)) * np.sqrt(dt)
    dz = [bloch_array(bob_homodyne_true_step(PROJ_G, a, b, params, dt=dt))[2] + 1 for a, b in dws]
    assert np.mean(dz) == pytest.approx(2 * params.epsilon * dt, rel=0.05)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
def test_homodyne_step_stays_on_circle(theta, a, b):
    p = ModelParams()
    for method in ("kraus", "euler"):
        out = bob_homodyne_true_step(pure_state_on_circle(theta), a * 0.03, b * 0.03, p, dt=1e-3, method=method)
        assert abs(bloch_array(out)[1]) < 1e-12


def test_homodyne_purity_preserved(params, rng):
    rho = PROJ_G.copy()
    for _ in range(1000):
        dw = rng.standard_normal(2) * np.sqrt(1e-3)
        rho = bob_homodyne_true_step(rho, dw[0], dw[1], params, HomodyneConfig(), 1e-3)
    assert purity(rho) == pytest.approx(1, abs=1e-12)


def test_homodyne_current_examples(params):
    cfg = HomodyneConfig()
    dt = 1e-3
    assert homodyne_current(MAXIMALLY_MIXED, cfg, 0.01, dt, params) * dt == pytest.approx(0.01)
    x_state = pure_state_on_circle(np.pi / 2)
    assert homodyne_current(x_state, cfg, 0.02, dt, params) * dt == pytest.approx(np.sqrt(params.gamma) * dt + 0.02)
    for ch in ("gamma", "epsilon"):
        assert homodyne_current(PROJ_G, cfg, 0.0, dt, params, ch) == pytest.approx(0)
    # a quarter-wave LO phase reads the y quadrature
    y_state = density_from_bloch((0, 1, 0))
    assert homodyne_current(y_state, HomodyneConfig(np.pi / 2, 0), 0.0, dt, params) == pytest.approx(np.sqrt(params.gamma))
    with pytest.raises(ValidationError):
        homodyne_current(PROJ_G, cfg, 0.0, dt, params, "delta")


def test_langevin_matches_drift_and_diffusion(params):
    theta = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    dw = np.linspace(-0.05, 0.05, 50)
    bg, be = diffusion_B(theta, params)
    expect = wrap_angle(theta + drift_A(theta, params) * 1e-3 + bg * dw + be * dw[::-1])
    assert np.allclose(theta_langevin_step(theta, dw, dw[::-1], params, 1e-3), expect, atol=1e-14)


def test_langevin_coefficients(params):
    dt = 1e-3
    # theta = pi: only the epsilon noise acts, with amplitude -2 sqrt(eps)
    assert theta_langevin_step(np.pi, 0.0, 0.0, params, dt) == pytest.approx(np.pi)
    assert theta_langevin_step(np.pi, 0.0, 0.01, params, dt) == pytest.approx(np.pi - 2 * np.sqrt(0.05) * 0.01)
    assert theta_langevin_step(np.pi, 0.01, 0.0, params, dt) == pytest.approx(np.pi)
    assert theta_langevin_step(0.0, 0.01, 0.0, params, dt) == pytest.approx(0.02)
    assert theta_langevin_step(0.0, 0.0, 0.5, params, dt) == pytest.approx(0.0)


@given(st.floats(0, 2 * np.pi), st.floats(-1, 1), st.floats(-1, 1))
def test_langevin_range(theta, a, b):
    out = theta_langevin_step(theta, a, b, ModelParams(), 1e-3)
    assert 0 <= out < 2 * np.pi


def test_langevin_ensemble_mean_matches_rate_equation(params):
    rng = np.random.default_rng(7)
    n, dt, T = 100_000, 1e-3, 1.5
    th = np.full(n, np.pi)
    checks = {250: None, 750: None, 1500: None}
    for k in range(1, int(T / dt) + 1):
        dw = rng.standard_normal((2, n)) * np.sqrt(dt)
        th = theta_langevin_step(th, dw[0], dw[1], params, dt)
        if k in checks:
            checks[k] = np.cos(th).mean()
    for k, m in checks.items():
        assert m == pytest.approx(filtered_z(k * dt, -1.0, params.gamma, params.epsilon), abs=2e-2)


# --- adaptive ---


def test_adaptive_step(pre):
    assert adaptive_true_step(0, (0, 0), pre) == 0
    assert adaptive_true_step(0, (1, 0), pre) == 1
    assert adaptive_true_step(1, (0, 1), pre) == 2
    assert adaptive_true_step(2, (1, 0), pre) == 0
    with pytest.raises(ValidationError):
        adaptive_true_step(3, (0, 0), pre)


def test_adaptive_long_run_occupations(params, pre):
    dt = 0.05 / pre.channel_rates().max()
    grid = TimeGrid(0.0, 5000 * dt, dt)
    ens = sample_ensemble("adaptive", params, grid, 200, seed=3)  # 10^6 steps in total
    frac = np.array([(ens.values[:, 1:] == i).mean() for i in range(3)])
    assert np.allclose(frac, pre.occupations, atol=0.01)


# --- sampling ---


def test_sampling_is_reproducible(params):
    g = TimeGrid(0.0, 1.0, 1e-3)
    for scheme in ("photon", "homodyne", "adaptive"):
        a = sample_trajectory(scheme, params, g, seed=9)
        b = sample_trajectory(scheme, params, g, seed=9)
        assert np.array_equal(a.true_states, b.true_states)
        for field in ("dN_o", "dN_u", "dW"):
            x, y = getattr(a.record, field), getattr(b.record, field)
            assert (x is None and y is None) or np.array_equal(x, y)


def test_ensemble_matches_single_paths_and_ignores_chunking(params):
    g = TimeGrid(0.0, 0.5, 1e-3)
    ck = [0, 250, 500]
    for scheme in ("photon", "homodyne", "adaptive"):
        a = sample_ensemble(scheme, params, g, 7, seed=4, checkpoints=ck, chunk_size=3, block=64)
        b = sample_ensemble(scheme, params, g, 7, seed=4, checkpoints=ck, chunk_size=7)
        assert np.allclose(a.values, b.values, atol=1e-12, rtol=0)
        single = sample_trajectory(scheme, params, g, seed=4, index=5)
        assert np.allclose(a.density_matrices()[5], single.true_states[ck], atol=1e-12)


def test_worker_pool_gives_identical_results(params):
    g = TimeGrid(0.0, 0.2, 1e-3)
    a = sample_ensemble("homodyne", params, g, 20, seed=8, checkpoints=[200], chunk_size=5, workers=2)
    b = sample_ensemble("homodyne", params, g, 20, seed=8, checkpoints=[200], chunk_size=20)
    assert np.array_equal(a.values, b.values)


def test_config_errors(params):
    with pytest.raises(ConfigError):
        sample_trajectory("photon", params, TimeGrid(0.0, 1.0, 0.2), seed=0)
    with pytest.raises(ConfigError):
        sample_trajectory("adaptive", ModelParams(delta=0.1, delta_zero_limit=False), TimeGrid(0.0, 1.0, 1e-3))
    with pytest.raises(ConfigError):
        sample_ensemble("nope", params, TimeGrid(0.0, 1.0, 1e-3), 3)


def test_photon_time_fraction_excited(params):
    g = TimeGrid(0.0, 10.0, 1e-3)
    ens = sample_ensemble("photon", params, g, 1000, seed=5, checkpoints=range(0, 10001, 10))
    per_path = (ens.values == 0).mean(axis=1)
    sigma = per_path.std(ddof=1) / np.sqrt(per_path.size)
    assert abs(per_path.mean() - params.steady_excited) < 3 * sigma


def test_photon_true_states_are_basis_states(params):
    s = sample_trajectory("photon", params, TimeGrid(0.0, 10.0, 1e-3), seed=6, initial=0)
    is_e = np.all(s.true_states == PROJ_E, axis=(1, 2))
    is_g = np.all(s.true_states == PROJ_G, axis=(1, 2))
    assert np.all(is_e | is_g)
    assert s.record.dN_u.sum() > 0


def test_homodyne_record_statistics(params):
    g = TimeGrid.pre_jump_window(params, 1e-3)
    s = sample_trajectory("homodyne", params, g, seed=10)
    dW = s.record.dW
    n = dW.shape[0]
    assert np.all(np.abs(dW.mean(axis=0)) < 5 * np.sqrt(g.dt / n))
    assert np.allclose(dW.var(axis=0), g.dt, rtol=0.05)
    assert np.abs(bloch_array(s.true_states)[:, 1]).max() < 1e-10
    # filtered path of Alice (no clicks inside the window) stays steady
    assert np.abs(s.filtered_states[:, 0, 0] - 1 / 21).max() < 1e-12


@pytest.mark.parametrize(
    "scheme,initial",
    [("photon", 1), ("homodyne", np.pi / 2), ("homodyne", np.pi), ("adaptive", None)],
)
def test_ensemble_average_matches_master_equation(params, scheme, initial):
    g = TimeGrid(0.0, 4.0, 1e-3)
    ck = [0, 500, 1000, 2000, 4000]
    ens = sample_ensemble(scheme, params, g, 10_000, seed=21, checkpoints=ck, initial=initial)
    mean = ens.density_matrices().mean(axis=0)
    rho0 = mean[0] if initial is None else ens.density_matrices()[0, 0]
    ref = evolve_master_equation(rho0, model_lindblad_set(params), g.times[ck], 1e-3)
    assert np.abs(bloch_array(mean) - bloch_array(ref)).max() < 2e-2
