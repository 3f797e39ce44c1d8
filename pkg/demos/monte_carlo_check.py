"""Importance-weighted true-state ensembles reproduce the closed-form smoothers."""

import numpy as np

from qsmooth import ModelParams
from qsmooth.fpe import stationary_distribution
from qsmooth.retrofilter import pre_jump_effect_path
from qsmooth.smoother import classical_quantum_smooth, effect_weights, homodyne_smooth, mc_smooth
from qsmooth.trajectories import TimeGrid, sample_ensemble

params = ModelParams()
grid = TimeGrid(-2 / params.total_rate, 0.0, 1 / (1000 * params.total_rate))
checkpoints = [0, 1000, 1900, 2000]
effects = pre_jump_effect_path(params, grid.n_steps, grid.dt)
rho_F = np.diag([params.steady_excited, 1 - params.steady_excited])
density = stationary_distribution(params)

for scheme, exact in (("photon", lambda E: classical_quantum_smooth(rho_F, E)), ("homodyne", lambda E: homodyne_smooth(density, E))):
    ens = sample_ensemble(scheme, params, grid, 20_000, seed=1, checkpoints=checkpoints)
    states = ens.density_matrices()
    for j, k in enumerate(checkpoints):
        res = mc_smooth(states[:, j], effect_weights(states[:, j], effects[k]))
        err = np.abs(res.rho - exact(effects[k])).max()
        print(f"{scheme:>8} t={grid.times[k]:+.3f}  max|MC - exact|={err:.4f}  ESS={res.effective_sample_size:.0f}")
