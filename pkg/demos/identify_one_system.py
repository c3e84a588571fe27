"""Identify one block-sparse response with plain LMS and with BS-LMS.

Both filters use the same step size. BS-LMS gets the penalty intensity that the
theory says is optimal for this particular response.
"""
import numpy as np

from bslms import (FilterConfig, MGParams, generate_system, kappa_opt, run_filter,
                   steady_state_msd, theory_constants)
from bslms.sim import to_db

L, P, N = 800, 4, 40000
params = MGParams(L, 0.99, 0.91)
s = generate_system(params, seed=3)
print(f"response: {np.count_nonzero(s)} nonzero taps out of {L}")

rng = np.random.default_rng(0)
x = rng.standard_normal(N)
d = np.convolve(x, s)[:N] + 1e-2 * rng.standard_normal(N)

cfg = FilterConfig(L, P, 0.5 / L)
consts = theory_constants(s, cfg, 1.0, 1e-4)
best = kappa_opt(consts)

lms = run_filter(x, d, cfg, s).msd
bs = run_filter(x, d, cfg.replace(kappa=best.kappa), s).msd
print(f"kappa_opt = {best.kappa:.3e}")
print(f"LMS    steady MSD {to_db(lms[-5000:].mean()):7.2f} dB "
      f"(theory {to_db(steady_state_msd(0.0, consts)):7.2f} dB)")
print(f"BS-LMS steady MSD {to_db(bs[-5000:].mean()):7.2f} dB "
      f"(theory {to_db(best.msd):7.2f} dB)")
