import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_force_hmm
from qsmooth.errors import InconsistentRecordError, PreconditionError, ValidationError
from qsmooth.fpe import stationary_distribution
from qsmooth.pre_solver import published_ensemble
from qsmooth.qubit import (
    IDENTITY,
    MAXIMALLY_MIXED,
    ModelParams,
    PROJ_E,
    PROJ_G,
    bloch_from_density,
    density_from_bloch,
    pure_state_on_circle,
    purity,
    validate_density,
)
from qsmooth.smoother import (
    DiscreteHmm,
    LowEffectiveSampleSize,
    SmoothingInputs,
    adaptive_smooth,
    barycentric_coordinates,
    classical_hmm_filter,
    classical_hmm_retrofilter,
    classical_hmm_smooth,
    classical_quantum_smooth,
    effect_weights,
    expected_cost_filtered_under_smoothing,
    expected_cost_optimal,
    homodyne_smooth,
    mc_smooth,
    purity_overlap_expansion,
    smoothed_cost,
    swv_negativity_scan,
    swv_state,
    trsd_cost,
    von_neumann_entropy,
)


DEFAULT = ModelParams()


def steady_rho(params):
    p = params.steady_excited
    return np.diag([p, 1 - p]).astype(complex)


# --- classical HMM --------------------------------------------------------

prob_rows = arrays(float, (2, 2), elements=st.floats(0.05, 1.0)).map(lambda a: a / a.sum(1, keepdims=True))


@settings(max_examples=60, deadline=None)
@given(prob_rows, prob_rows, st.floats(0.05, 0.95), st.lists(st.integers(0, 1), min_size=1, max_size=8))
def test_hmm_matches_path_enumeration(trans, emis, p0, record):
    hmm = DiscreteHmm(trans, emis, [p0, 1 - p0])
    filt, smooth = brute_force_hmm(hmm, record)
    f = classical_hmm_filter(hmm, record)
    s = classical_hmm_smooth(f, classical_hmm_retrofilter(hmm, record))
    assert np.abs(f - filt).max() < 1e-12
    assert np.abs(s - smooth).max() < 1e-12


def test_three_state_chain_matches_enumeration():
    hmm = DiscreteHmm(
        [[0.8, 0.15, 0.05], [0.1, 0.7, 0.2], [0.3, 0.3, 0.4]],
        [[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]],
        [0.5, 0.3, 0.2],
    )
    record = [0, 1, 1, 0, 1, 0]
    filt, smooth = brute_force_hmm(hmm, record)
    f = classical_hmm_filter(hmm, record)
    assert np.abs(classical_hmm_smooth(f, classical_hmm_retrofilter(hmm, record)) - smooth).max() < 1e-12


def test_uninformative_emissions_follow_rate_equation():
    q = np.array([[-1.0, 1.0], [0.05, -0.05]])
    hmm = DiscreteHmm.from_rates(q, 0.1, np.full((2, 2), 0.5), [1.0, 0.0])
    f = classical_hmm_filter(hmm, np.zeros(20, dtype=int))
    expect = np.array([1.0, 0.0]) @ scipy.linalg.expm(q * 0.1 * 20)
    assert np.allclose(f[-1], expect, atol=1e-12)


def test_deterministic_emissions_collapse_belief():
    hmm = DiscreteHmm(np.eye(2), np.eye(2), [0.5, 0.5])
    f = classical_hmm_filter(hmm, [1, 1])
    assert np.allclose(f[1], [0, 1])
    with pytest.raises(InconsistentRecordError):
        classical_hmm_filter(hmm, [1, 0])


def test_hmm_smooth_examples():
    f = np.array([[0.3, 0.7]])
    assert np.allclose(classical_hmm_smooth(f, [[0.5, 0.5]]), f)
    assert np.allclose(classical_hmm_smooth(f, [[1.0, 0.0]]), [[1, 0]])
    with pytest.raises(InconsistentRecordError):
        classical_hmm_smooth([[1.0, 0.0]], [[0.0, 1.0]])
    with pytest.raises(ValidationError):
        classical_hmm_smooth(f, [[1.0, 0.0, 0.0]])


def test_hmm_validation():
    with pytest.raises(ValidationError):
        DiscreteHmm([[0.5, 0.6], [0.5, 0.5]], np.eye(2), [0.5, 0.5])
    with pytest.raises(ValidationError):
        DiscreteHmm.from_rates([[1.0, 0.0], [0.0, 0.0]], 0.1, np.eye(2), [0.5, 0.5])


# --- quantum smoothers ----------------------------------------------------


def test_classical_quantum_smooth_examples(params, mc_effects):
    rho_F = steady_rho(params)
    assert np.allclose(classical_quantum_smooth(rho_F, IDENTITY), rho_F)
    assert np.allclose(classical_quantum_smooth(np.diag([0.3, 0.7]), PROJ_E), PROJ_E)
    assert classical_quantum_smooth(rho_F, mc_effects[-1])[0, 0].real == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        classical_quantum_smooth(rho_F, density_from_bloch((0.5, 0, 0)))


def test_commuting_case_equivalence(params, mc_effects):
    rho_F = steady_rho(params)
    cq = np.array([classical_quantum_smooth(rho_F, E) for E in mc_effects])
    sw = np.array([swv_state(rho_F, E)[0] for E in mc_effects])
    diag_e = np.stack([mc_effects[:, 0, 0].real, mc_effects[:, 1, 1].real], axis=1)
    cl = classical_hmm_smooth(np.tile(np.diag(rho_F).real, (len(diag_e), 1)), diag_e)
    assert np.abs(cq - sw).max() < 1e-9
    assert np.abs(cq[:, 0, 0].real - cl[:, 0]).max() < 1e-9
    for rho in cq:
        validate_density(rho, clip=False)


def test_swv_state_examples(params):
    rho_F = steady_rho(params)
    j, ok = swv_state(rho_F, IDENTITY)
    assert ok and np.allclose(j, rho_F)
    j, ok = swv_state(density_from_bloch((0, 0, 0.9)), density_from_bloch((0.9, 0, 0)))
    assert np.allclose(j, j.conj().T)
    with pytest.raises(InconsistentRecordError):
        swv_state(PROJ_E, PROJ_G)


def test_swv_scan_finds_indefinite_state():
    res = swv_negativity_scan()
    assert res.min_eigenvalue < -1e-3
    assert np.linalg.norm(res.rho_F @ res.effect - res.effect @ res.rho_F) > 1e-3
    j, ok = swv_state(res.rho_F, res.effect)
    assert not ok and np.linalg.eigvalsh(j)[0] == pytest.approx(res.min_eigenvalue)


def test_homodyne_smooth_examples(params, mc_effects):
    p = stationary_distribution(params)
    r = bloch_from_density(homodyne_smooth(p, IDENTITY))
    assert r.x == pytest.approx(p.mean_sin(), abs=1e-12)
    assert r.z == pytest.approx(p.mean_cos(), abs=1e-12)
    assert abs(p.mean_sin()) < 1e-12
    rs = bloch_from_density(homodyne_smooth(p, mc_effects[-1]))
    assert abs(rs.x) < 1e-12
    z_ss = (params.epsilon - params.gamma) / params.total_rate
    assert z_ss < rs.z < 1
    assert abs(rs.z - 1.0) > 0.1


def test_adaptive_smooth_examples(params, pre, mc_effects):
    assert np.allclose(adaptive_smooth(pre, IDENTITY), steady_rho(params), atol=1e-9)
    overlaps = np.array([s[0, 0].real for s in pre.states()]) * pre.occupations
    expect = np.einsum("k,kij->ij", overlaps / overlaps.sum(), pre.states())
    assert np.allclose(adaptive_smooth(pre, PROJ_E), expect)
    path = adaptive_smooth(pre, mc_effects)
    assert abs(path[-1, 0, 1].real) > 0.01
    xz = np.stack([2 * path[:, 0, 1].real, (path[:, 0, 0] - path[:, 1, 1]).real], axis=1)
    assert barycentric_coordinates(xz, pre).min() >= -1e-6


def test_smoothing_inputs_dispatch(params, pre):
    rho_F = steady_rho(params)
    assert np.allclose(SmoothingInputs(rho_F, PROJ_E).smooth(), PROJ_E)
    assert np.allclose(SmoothingInputs(np.array([0.2, 0.8]), np.array([1.0, 1.0])).smooth(), [0.2, 0.8])
    assert np.allclose(SmoothingInputs(rho_F, IDENTITY, pre=pre).smooth(), rho_F, atol=1e-9)
    with pytest.raises(ValidationError):
        SmoothingInputs(rho_F, IDENTITY, stationary_distribution(params, 128), pre)


@settings(max_examples=30)
@given(st.floats(1e-3, 1e3), st.floats(0.0, 0.9), st.floats(0.0, 2 * np.pi))
def test_scale_invariance(scale, length, angle):
    E = density_from_bloch((length * np.sin(angle), 0.0, length * np.cos(angle)))
    p = stationary_distribution(DEFAULT, 128)
    pre = published_ensemble(DEFAULT)
    assert np.allclose(homodyne_smooth(p, scale * E), homodyne_smooth(p, E), atol=1e-9)
    assert np.allclose(adaptive_smooth(pre, scale * E), adaptive_smooth(pre, E), atol=1e-9)
    Ed = np.diag(np.diag(E))
    rho = np.diag([0.3, 0.7])
    assert np.allclose(classical_quantum_smooth(rho, scale * Ed), classical_quantum_smooth(rho, Ed), atol=1e-9)


# --- Monte Carlo ----------------------------------------------------------


def grid_indices(ens, grid):
    return np.rint((ens.times - grid.t_start) / grid.dt).astype(int)



@pytest.mark.filterwarnings("ignore::qsmooth.smoother.LowEffectiveSampleSize")
def test_mc_smooth_equal_weights_is_the_mean(rng):
    states = np.array([density_from_bloch(v) for v in rng.uniform(-0.5, 0.5, (50, 3))])
    res = mc_smooth(states, np.ones(50))
    assert np.allclose(res.rho, states.mean(0))
    with pytest.raises(ValidationError):
        mc_smooth(states[:0], [])
    with pytest.raises(InconsistentRecordError):
        mc_smooth(states, np.zeros(50))


def test_mc_smooth_warns_on_concentrated_weights():
    states = np.array([PROJ_E] * 200)
    w = np.zeros(200)
    w[:5] = 1.0
    with pytest.warns(LowEffectiveSampleSize):
        res = mc_smooth(states, w)
    assert res.low_ess and res.effective_sample_size == pytest.approx(5)


@pytest.mark.slow
def test_photon_mc_matches_closed_form(params, photon_mc, mc_effects, mc_grid):
    rho_F = steady_rho(params)
    states = photon_mc.density_matrices()
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", LowEffectiveSampleSize)
        for j, k in enumerate(grid_indices(photon_mc, mc_grid)):
            E = mc_effects[k]
            mc = mc_smooth(states[:, j], effect_weights(states[:, j], E)).rho
            worst = max(worst, np.abs(mc - classical_quantum_smooth(rho_F, E)).max())
    assert worst < 2e-2


@pytest.mark.slow
def test_homodyne_mc_matches_fpe_route(params, homodyne_mc, mc_effects, mc_grid):
    p = stationary_distribution(params)
    states = homodyne_mc.density_matrices()
    worst = 0.0
    for j, k in enumerate(grid_indices(homodyne_mc, mc_grid)):
        E = mc_effects[k]
        mc = mc_smooth(states[:, j], effect_weights(states[:, j], E)).rho
        worst = max(worst, np.abs(mc - homodyne_smooth(p, E)).max())
    assert worst < 2e-2


@pytest.mark.slow
@pytest.mark.parametrize("scheme", ["photon", "homodyne"])
def test_forward_conditioning_oracle(params, scheme, photon_mc, homodyne_mc, mc_effects, mc_grid):
    """Weighting each path by its own click probability at 0- gives the same smoother."""
    ens = photon_mc if scheme == "photon" else homodyne_mc
    states = ens.density_matrices()
    click_weight = states[:, -1, 0, 0].real
    for j, k in enumerate(grid_indices(ens, mc_grid)):
        forward = mc_smooth(states[:, j], click_weight).rho
        backward = mc_smooth(states[:, j], effect_weights(states[:, j], mc_effects[k])).rho
        assert np.abs(forward - backward).max() < 2e-2


@pytest.mark.slow
def test_smoother_is_the_cost_minimizer(photon_mc, homodyne_mc, mc_effects, mc_grid, rng):
    for ens in (photon_mc, homodyne_mc):
        states = ens.density_matrices()[:5000]
        for j, k in enumerate(grid_indices(ens, mc_grid)):
            w = effect_weights(states[:, j], mc_effects[k])
            best = mc_smooth(states[:, j], w).rho
            c_best = trsd_cost(best, states[:, j], w)
            for _ in range(100):
                h = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
                h = h + h.conj().T
                h -= np.trace(h) / 2 * IDENTITY
                other = best + 1e-2 * rng.uniform(0.1, 1) * h
                assert trsd_cost(other, states[:, j], w) >= c_best
            assert expected_cost_optimal(best, states[:, j], w) == pytest.approx(c_best, abs=1e-10)


# --- costs ----------------------------------------------------------------


def test_optimal_cost_examples():
    assert expected_cost_optimal(PROJ_E, [PROJ_E, PROJ_E]) == pytest.approx(0.0)
    assert expected_cost_optimal(MAXIMALLY_MIXED, [PROJ_E, PROJ_G]) == pytest.approx(0.5)
    states = np.array([pure_state_on_circle(t) for t in (0.3, 1.2, 2.5)])
    w = np.array([0.2, 0.5, 0.3])
    mean = np.einsum("k,kij->ij", w, states)
    assert expected_cost_optimal(mean, states, w) == pytest.approx(1 - purity(mean))
    assert trsd_cost(mean, states, w) == pytest.approx(1 - purity(mean))
    with pytest.raises(PreconditionError):
        expected_cost_optimal(PROJ_E, [PROJ_E, PROJ_G])


def test_filtered_cost_examples():
    rho = density_from_bloch((0.2, 0.1, -0.4))
    assert expected_cost_filtered_under_smoothing(rho, rho) == pytest.approx(smoothed_cost(rho))
    assert expected_cost_filtered_under_smoothing(MAXIMALLY_MIXED, PROJ_E) == pytest.approx(0.5)


def test_filtered_cost_dominates_on_photon_window(params, mc_effects):
    rho_F = steady_rho(params)
    rho_S = np.array([classical_quantum_smooth(rho_F, E) for E in mc_effects])
    gap = expected_cost_filtered_under_smoothing(rho_F[None], rho_S) - smoothed_cost(rho_S)
    assert gap.min() >= -1e-12


@pytest.mark.filterwarnings("ignore::qsmooth.smoother.LowEffectiveSampleSize")
def test_purity_overlap_examples(rng):
    assert purity_overlap_expansion([PROJ_E], [1.0]) == pytest.approx(1.0)
    assert purity_overlap_expansion([PROJ_E, PROJ_G], [0.3, 0.7]) == pytest.approx(0.09 + 0.49)
    assert purity_overlap_expansion([PROJ_E, PROJ_E], [0.5, 0.5]) == pytest.approx(1.0)
    states = np.array([pure_state_on_circle(t) for t in rng.uniform(0, 6.28, 40)])
    w = rng.random(40)
    w /= w.sum()
    assert purity_overlap_expansion(states, w) == pytest.approx(purity(mc_smooth(states, w).rho), abs=1e-10)
    with pytest.raises(ValidationError):
        purity_overlap_expansion([PROJ_E], [0.5])


def test_entropy_examples_and_ordering():
    assert von_neumann_entropy(PROJ_E) == pytest.approx(0.0)
    assert von_neumann_entropy(MAXIMALLY_MIXED) == pytest.approx(np.log(2))
    rs = np.linspace(0.01, 0.99, 99)
    states = [density_from_bloch((0, 0, r)) for r in rs]
    ent = np.array([von_neumann_entropy(s) for s in states])
    pur = np.array([purity(s) for s in states])
    assert np.all(np.diff(ent) < 0) and np.all(np.diff(pur) > 0)
    shuffled = np.random.default_rng(3).permutation(len(states))
    assert np.array_equal(np.argsort(pur[shuffled]), np.argsort(-ent[shuffled]))
