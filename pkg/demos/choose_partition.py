"""Pick the partition size for a whole family of responses.

The ensemble-averaged theory gives the expected minimum MSD per P without
drawing any response. The best P grows with the mean cluster length.
"""
from bslms import MGParams, ams_msd, p_opt
from bslms.sim import to_db

L, mu = 800, 0.4 / 800
for p1, p2 in ((0.98, 0.82), (0.99, 0.91), (0.995, 0.955)):
    params = MGParams(L, p1, p2)
    best = p_opt(params, mu, sigma_v2=1e-4)
    curve = [to_db(ams_msd(params, P, mu, sigma_v2=1e-4)) for P in (1, 2, 4, 8, 16)]
    print(f"p1={p1} p2={p2}: mean cluster {1 / (1 - p2):5.1f} taps, best P = {best}, "
          "MSD at P=1,2,4,8,16: " + " ".join(f"{v:.2f}" for v in curve))
