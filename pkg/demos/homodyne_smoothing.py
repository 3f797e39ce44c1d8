"""X-homodyne unravelling: the smoothed state differs from the classical one."""

import numpy as np

from qsmooth import ModelParams
from qsmooth.fpe import stationary_distribution
from qsmooth.qubit import bloch_from_density
from qsmooth.retrofilter import pre_jump_effect_path
from qsmooth.smoother import classical_quantum_smooth, homodyne_smooth

params = ModelParams()
effects = pre_jump_effect_path(params, 9524, 1e-3)
density = stationary_distribution(params)
rho_F = np.diag([params.steady_excited, 1 - params.steady_excited])
print(f"stationary E[cos theta] = {density.mean_cos():+.6f} (filtered z = {-19 / 21:+.6f})")
for k in (0, 8000, 9000, 9400, 9500, 9524):
    hom = bloch_from_density(homodyne_smooth(density, effects[k]))
    cl = bloch_from_density(classical_quantum_smooth(rho_F, effects[k]))
    t = (k - 9524) * 1e-3
    print(f"t={t:+.3f}  homodyne (x, z)=({hom.x:+.4f}, {hom.z:+.4f})  classical z={cl.z:+.4f}")
