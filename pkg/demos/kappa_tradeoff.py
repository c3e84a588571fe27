"""How the penalty intensity trades bias for noise rejection.

Too little attraction leaves LMS behaviour. Too much biases the small taps.
The predicted curve has a single minimum at kappa_opt.
"""
import numpy as np

from bslms import FilterConfig, MGParams, generate_system, kappa_opt, steady_state_msd, theory_constants
from bslms.sim import to_db

L = 800
s = generate_system(MGParams(L, 0.99, 0.91), seed=11)
for P in (1, 5, 20):
    consts = theory_constants(s, FilterConfig(L, P, 0.8 / L), 1.0, 1e-4)
    k0 = kappa_opt(consts).kappa
    grid = k0 * np.logspace(-2, 2, 9)
    row = "  ".join(f"{to_db(steady_state_msd(k, consts)):6.1f}" for k in grid)
    print(f"P={P:2d} kappa_opt={k0:.2e}  MSD(dB) over kappa_opt*1e-2..1e2: {row}")
