"""The SWV state of non-commuting inputs can have a negative eigenvalue."""

import numpy as np

from qsmooth.qubit import bloch_array
from qsmooth.smoother import swv_negativity_scan, swv_state

res = swv_negativity_scan()
print(f"scanned {res.pairs_checked} Bloch pairs")
print(f"filtered Bloch {np.round(bloch_array(res.rho_F), 3)}, effect Bloch {np.round(bloch_array(res.effect), 3)}")
matrix, is_state = swv_state(res.rho_F, res.effect)
print(f"SWV eigenvalues {np.linalg.eigvalsh(matrix)}; valid state: {is_state}")
