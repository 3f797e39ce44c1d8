"""Solve for the cyclic PRE and smooth over it."""

import numpy as np

from qsmooth import ModelParams
from qsmooth.pre_solver import STATE_LABELS, multistart_solve, published_ensemble
from qsmooth.qubit import bloch_array
from qsmooth.retrofilter import pre_jump_effect_path
from qsmooth.smoother import adaptive_smooth, barycentric_coordinates

params = ModelParams()
pre = published_ensemble(params)
for label, theta, occ, wlo in zip(STATE_LABELS, pre.angles, pre.occupations, pre.wlos):
    print(f"{label:>5}: theta={theta:.5f} occupation={occ:.5f} mu-={wlo.minus:+.5f} mu+={wlo.plus:+.5f}")

effects = pre_jump_effect_path(params, 9524, 1e-3)
bloch = bloch_array(adaptive_smooth(pre, effects))
bary = barycentric_coordinates(bloch[:, [0, 2]], pre)
print(f"smoothed Bloch at 0-: x={bloch[-1, 0]:+.4f} z={bloch[-1, 2]:+.4f}")
print(f"smallest barycentric coordinate over the window: {bary.min():.4f}")

solutions = multistart_solve(params, n_starts=10, seed=0)
print(f"multistart found {len(solutions)} cyclic ensembles:")
for s in solutions:
    print("  angles", np.round(s.angles, 4))
