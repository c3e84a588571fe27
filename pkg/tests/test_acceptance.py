"""Acceptance checks, one per criterion, each at its stated tolerance.

A summary line per criterion (PASS/FAIL plus the measured numbers) is printed
at the end of the pytest run.
"""

import math

import numpy as np
import pytest
from scipy.signal import lfilter

from bslms import FilterConfig, FilterState, MGParams, bs_lms_step, run_filter
from bslms.filter import classify_coefficients
from bslms.mgmodel import border_effect_q, ensemble_stats, generate_systems, group_occupancy_pmf
from bslms.sim import (
    ExperimentSpec,
    compare_transient,
    lms_settle_iterations,
    run_identification,
    sweep_kappa,
    to_db,
)
from bslms.special import incomplete_gamma_lower
from bslms.theory import (
    ams_msd,
    averaged_theory,
    fast_convergence_threshold,
    equalize_step_size,
    f_alpha_moments,
    kappa_opt,
    omega_solve,
    p_opt,
    steady_state_msd,
    theory_constants,
)

L_PAPER = 800
SNR_DB = 40.0
SIGMA_V2 = 10.0 ** (-SNR_DB / 10.0)
FIG7_SETS = [(0.98, 0.82), (0.99, 0.91), (0.995, 0.955)]
DESK = {"systems": 20, "trials": 5}


# --- 1 ----------------------------------------------------------------------

def _scalar_za_lms(x, d, L, mu, kappa, alpha, delta):
    """Plain per-tap zero-attracting LMS in pure Python, without any grouping.

    Near zero the attractor is an expanding map, so two algebraically equal
    codings drift apart from last-bit rounding alone. The sums and products
    here are therefore associated the same way as in the library.
    """
    w = [0.0] * L
    taps = [0.0] * L
    traj = []
    for n in range(len(x)):
        taps = [float(x[n])] + taps[:-1]
        y = 0.0
        for wk, xk in zip(w, taps):
            y += xk * wk
        step = mu * (float(d[n]) - y)
        new = []
        for wk, xk in zip(w, taps):
            mag = abs(wk) + delta
            if kappa != 0.0 and mag < 1.0 / alpha:
                new.append((wk + step * xk) + kappa * (wk * (2.0 * alpha * (alpha - 1.0 / mag))))
            else:
                new.append(wk + step * xk)
        w = new
        traj.append(w)
    return np.array(traj)


@pytest.mark.criterion(1, "P=1 equals scalar zero-attraction LMS (100 instances, L=8, 200 steps)")
def test_c1_degeneracy_equivalence(detail, stopwatch):
    rng = np.random.default_rng(20240101)
    L, N = 8, 200
    run_filter(np.zeros(4), np.zeros(4), FilterConfig(L, 1, 0.01, kappa=1e-3))  # JIT warm-up
    t = stopwatch()
    worst = 0.0
    for _ in range(100):
        s = rng.standard_normal(L) * (rng.random(L) < 0.4)
        x = rng.standard_normal(N)
        d = lfilter(s, [1.0], x) + 0.01 * rng.standard_normal(N)
        cfg = FilterConfig(L, 1, mu=rng.uniform(0.01, 0.1), alpha=rng.uniform(0.5, 10.0),
                           kappa=rng.uniform(1e-4, 1e-2), delta=10.0 ** rng.uniform(-8, -3))
        ref = _scalar_za_lms(x, d, L, cfg.mu, cfg.kappa, cfg.alpha, cfg.delta)
        state = FilterState.zeros(cfg)
        for n in range(N):
            state, _ = bs_lms_step(state, x[n], d[n], cfg)
            worst = max(worst, float(np.max(np.abs(state.weights[:L] - ref[n]))))
        fast = run_filter(x, d, cfg).weights
        worst = max(worst, float(np.max(np.abs(fast - ref[-1]))))
    elapsed = stopwatch() - t
    detail(f"max per-tap deviation {worst:.2e} (tol 1e-12), runtime {elapsed:.2f} s (limit 1 s)")
    assert worst <= 1e-12
    assert elapsed < 1.0


# --- 2 ----------------------------------------------------------------------

@pytest.mark.criterion(2, "kappa=0 steady state matches mu sigma_v2 L / Delta_L within 0.5 dB")
def test_c2_lms_limit(detail, stopwatch):
    L, mu = 64, 0.5 / 64
    s = np.random.default_rng(5).standard_normal(L)
    cfg = FilterConfig(L, 1, mu, kappa=0.0)
    d_theory = mu * SIGMA_V2 * L / (2.0 - (L + 2) * mu)
    iters = lms_settle_iterations(float(s @ s), d_theory, mu, L)
    spec = ExperimentSpec(cfg, iters, SNR_DB, systems=s, trials_per_system=2000, master_seed=3)
    curve = run_identification(spec)
    gap = abs(to_db(curve.steady_state()) - to_db(d_theory))
    detail(f"sim {to_db(curve.steady_state()):.3f} dB vs theory {to_db(d_theory):.3f} dB, "
           f"gap {gap:.3f} dB (tol 0.5), {iters} iterations, {stopwatch():.1f} s (limit 60 s)")
    assert gap < 0.5
    assert stopwatch() < 60.0


# --- 3 ----------------------------------------------------------------------

@pytest.mark.criterion(3, "kappa sweep (0.99, 0.91), mu=0.8/L: sim within 1 dB of theory, argmin near kappa_opt")
@pytest.mark.parametrize("P", [1, 5])
def test_c3_kappa_sweep(P, detail, stopwatch):
    params = MGParams(L_PAPER, 0.99, 0.91)
    mu = 0.8 / L_PAPER
    grid = np.logspace(-9, -5, 9)
    step = math.log10(grid[1] / grid[0])
    iters = lms_settle_iterations(params.L * params.sparsity, ams_msd(params, P, mu, sigma_v2=SIGMA_V2),
                                  mu, params.L)
    spec = ExperimentSpec(FilterConfig(L_PAPER, P, mu), iters, SNR_DB, model=params,
                          n_systems=DESK["systems"], trials_per_system=DESK["trials"],
                          master_seed=6)
    tab = sweep_kappa(spec, grid)
    gaps = np.abs(tab["msd_sim_db"] - tab["msd_theory_db"])
    k_sim = grid[int(np.argmin(tab["msd_sim"]))]
    k_opt = tab.metadata["kappa_opt_geomean"]
    off = abs(math.log10(k_sim) - math.log10(k_opt)) / step
    detail(f"P={P}: max |sim-theory| {gaps.max():.3f} dB (tol 1), sim argmin {k_sim:.2e} vs "
           f"kappa_opt {k_opt:.2e} ({off:.2f} grid steps, tol 1), {stopwatch():.0f} s")
    assert gaps.max() <= 1.0
    assert off <= 1.0


# --- 4 ----------------------------------------------------------------------

@pytest.mark.criterion(4, "best partition size from averaged theory is 3, 4, 5")
def test_c4_p_opt(detail, stopwatch):
    found = [p_opt(MGParams(L_PAPER, p1, p2), 0.4 / L_PAPER, 1.0, 1.0, SIGMA_V2)
             for p1, p2 in FIG7_SETS]
    detail(f"P_opt = {found} for {FIG7_SETS}, {stopwatch() * 1e3:.0f} ms")
    assert found == [3, 4, 5]
    assert stopwatch() < 1.0


# --- 5 ----------------------------------------------------------------------

BURN_IN = 200  # taps; the chain starts from a zero tap, far from stationary for ~1/(2-p1-p2) taps


def _ratio_and_se(num, den):
    """Ratio of sums with a delta-method standard error over independent systems."""
    r = num.sum() / den.sum()
    resid = num - r * den
    se = math.sqrt(resid.var(ddof=1) * len(num)) / den.sum()
    return r, se


@pytest.mark.criterion(5, "M-G model statistics at 1e4 systems")
@pytest.mark.parametrize("p1,p2,P", [(0.98, 0.82, 3), (0.99, 0.91, 4), (0.995, 0.955, 5)])
def test_c5_model_statistics(p1, p2, P, detail, stopwatch):
    params = MGParams(L_PAPER, p1, p2)
    K = 10_000
    nz = generate_systems(params, K, seed=17) != 0.0
    stats = ensemble_stats(params)

    tail = nz[:, BURN_IN:]
    frac = tail.mean(axis=1)
    z_s = (frac.mean() - stats.s_bar) / (frac.std(ddof=1) / math.sqrt(K))

    # mean run lengths from transition counts: 1/(1-p2) = #nonzero / #(nonzero -> zero)
    chain = np.hstack([np.zeros((K, 1), bool), nz])
    prev, nxt = chain[:, :-1], chain[:, 1:]
    b_nz, se_nz = _ratio_and_se(prev.sum(1).astype(float),
                                (prev & ~nxt).sum(1).astype(float))
    b_z, se_z = _ratio_and_se((~prev).sum(1).astype(float), (~prev & nxt).sum(1).astype(float))
    z_nz = (b_nz - stats.b_nz_bar) / se_nz
    z_z = (b_z - stats.b_z_bar) / se_z

    # border effect and group occupancy over groups that start after the burn-in
    g0 = -(-BURN_IN // P)
    n_groups = L_PAPER // P
    groups = nz[:, : n_groups * P].reshape(K, n_groups, P)[:, g0:]
    counts = groups.sum(axis=2)
    q_emp = (counts > 0).mean() * L_PAPER
    q_th = border_effect_q(params, P)
    q_rel = abs(q_emp / q_th - 1.0)
    hist = np.bincount(counts.ravel(), minlength=P + 1) / counts.size
    tv = 0.5 * np.abs(hist - group_occupancy_pmf(params, P)).sum()

    detail(f"({p1},{p2}) P={P}: z(S)={z_s:+.2f} z(Bnz)={z_nz:+.2f} z(Bz)={z_z:+.2f} (|z|<=3), "
           f"Q rel err {q_rel:.4f} (tol 0.01), occupancy TV {tv:.4f} (tol 0.01), {stopwatch():.0f} s")
    assert max(abs(z_s), abs(z_nz), abs(z_z)) <= 3.0
    assert q_rel <= 0.01
    assert tv < 0.01
    assert stopwatch() < 60.0


# --- 6 and 7 share the Monte Carlo runs -----------------------------------

@pytest.fixture(scope="module")
def transient_runs():
    cache = {}

    def get(p1, p2):
        if (p1, p2) not in cache:
            params = MGParams(L_PAPER, p1, p2)
            mu_l0 = 0.4 / L_PAPER
            P = p_opt(params, mu_l0, sigma_v2=SIGMA_V2)
            mu_bs = equalize_step_size(params, P, ams_msd(params, 1, mu_l0, sigma_v2=SIGMA_V2),
                                       sigma_v2=SIGMA_V2)
            cache[(p1, p2)] = compare_transient(
                params, SNR_DB, mu_bs, mu_l0, P_bs=P, systems=DESK["systems"],
                trials=DESK["trials"], master_seed=8)
        return cache[(p1, p2)]

    return get


@pytest.mark.criterion(6, "averaged transient curve within 2 dB of simulation after n=100; c' sum identity")
def test_c6_transient_tracking(transient_runs, detail):
    cmp = transient_runs(0.99, 0.91)
    worst = {}
    for name, sim, th in (("BS-LMS", cmp.curve_bs.msd, cmp.theory_bs),
                          ("l0-LMS", cmp.curve_l0.msd, cmp.theory_l0)):
        gap = np.abs(to_db(sim[100:]) - to_db(th[100:]))
        worst[name] = (float(gap.max()), int(np.argmax(gap)) + 100)
    detail("max |theory - sim| after n=100: " + ", ".join(
        f"{k} {v[0]:.2f} dB at n={v[1]}" for k, v in worst.items()) + " (tol 2 dB)")
    assert all(v[0] <= 2.0 for v in worst.values())


@pytest.mark.criterion(6, "averaged transient curve within 2 dB of simulation after n=100; c' sum identity")
@pytest.mark.parametrize("p1,p2", FIG7_SETS)
@pytest.mark.parametrize("P", [1, 3, 4, 5, 10])
def test_c6_initial_value_identity(p1, p2, P, detail):
    params = MGParams(L_PAPER, p1, p2)
    avg = averaged_theory(params, P, 0.5 / L_PAPER, sigma_v2=SIGMA_V2)
    total = sum(avg.coeffs_prime) + avg.ams_msd
    norm2 = params.L * params.sparsity * params.sigma_s2
    rel = abs(total - norm2) / norm2
    if (p1, p2, P) == (0.99, 0.91, 4):
        detail(f"|c'1+c'2+c'3+D - mean||s||^2| / mean||s||^2 = {rel:.1e} (tol 1e-6)")
    assert rel <= 1e-6


@pytest.mark.criterion(7, "equalized BS-LMS reaches -35 dB first; every rate lambda' smaller")
@pytest.mark.parametrize("p1,p2", FIG7_SETS)
def test_c7_superiority(p1, p2, transient_runs, detail):
    params = MGParams(L_PAPER, p1, p2)
    lhs = (1.0 - p1) / (1.0 - p2) ** 2
    cmp = transient_runs(p1, p2)
    lam_bs = np.array(cmp.averaged_bs.lambdas_prime)
    lam_l0 = np.array(cmp.averaged_l0.lambdas_prime)
    detail(f"({p1},{p2}) P_opt={cmp.P_bs} mu_bs={cmp.mu_bs * L_PAPER:.4f}/L: "
           f"n(-35 dB) BS={cmp.iters_bs} l0={cmp.iters_l0}; condition {lhs:.3f} >= "
           f"{fast_convergence_threshold():.4f}; lambda' BS {np.round(lam_bs, 5).tolist()} "
           f"vs l0 {np.round(lam_l0, 5).tolist()}")
    assert lhs >= fast_convergence_threshold()
    assert cmp.iters_bs is not None and cmp.iters_l0 is not None
    assert cmp.iters_bs < cmp.iters_l0
    assert np.all(lam_bs < lam_l0)
    assert round(lhs, 3) == {(0.98, 0.82): 0.617, (0.99, 0.91): 1.235, (0.995, 0.955): 2.469}[(p1, p2)]


# --- 8 ----------------------------------------------------------------------

def _fig6_constants(P, seed=0):
    params = MGParams(L_PAPER, 0.99, 0.91)
    s = generate_systems(params, 1, seed=seed)[0]
    return theory_constants(s, FilterConfig(L_PAPER, P, 0.8 / L_PAPER), 1.0, SIGMA_V2)


@pytest.mark.criterion(8, "numerical oracles")
@pytest.mark.parametrize("P", [1, 5, 10, 20])
def test_c8_kappa_opt_stationary(P, detail):
    c = _fig6_constants(P, seed=P)
    k = kappa_opt(c).kappa
    h = 1e-4 * k
    slope = (steady_state_msd(k + h, c) - steady_state_msd(k - h, c)) / (2.0 * h)
    rel = abs(slope) * k / steady_state_msd(k, c)
    if P == 5:
        detail(f"kappa_opt stationarity: relative slope {rel:.1e} (tol 1e-6)")
    assert rel < 1e-6


@pytest.mark.criterion(8, "numerical oracles")
@pytest.mark.parametrize("P", [1, 5, 20])
@pytest.mark.parametrize("kscale", [0.1, 1.0, 10.0])
def test_c8_omega_residual(P, kscale, detail):
    c = _fig6_constants(P, seed=P)
    kappa = kscale * kappa_opt(c).kappa
    w = omega_solve(c, kappa)
    mx = c.mu * c.sigma_x2
    terms = [
        2.0 * mx * c.delta_0 * c.delta_L * w * w,
        8.0 * kappa * c.alpha * c.theta_p * c.delta_0 * c.delta_Q / math.sqrt(2.0 * math.pi) * w,
        -2.0 * c.mu * mx * c.sigma_v2 * c.delta_0,
        -kappa**2 * (4.0 * c.alpha**2 * c.delta_Q / c.P + c.g_s * c.delta_0_prime),
    ]
    rel = abs(sum(terms)) / max(abs(t) for t in terms)
    if (P, kscale) == (5, 1.0):
        detail(f"omega quadratic relative residual {rel:.1e} (tol 1e-10)")
    assert w > 0
    assert rel < 1e-10


@pytest.mark.criterion(8, "numerical oracles")
def test_c8_incomplete_gamma_recurrence(detail):
    worst = 0.0
    for x in (0.05, 0.5, 1.0, 2.0, 5.0, 12.5, 40.0):
        for twice_a in range(1, 61):
            a = twice_a / 2.0
            lhs = incomplete_gamma_lower(a + 1.0, x)
            rhs = a * incomplete_gamma_lower(a, x) - math.exp(a * math.log(x) - x)
            scale = max(abs(lhs), a * incomplete_gamma_lower(a, x), math.exp(a * math.log(x) - x))
            worst = max(worst, abs(lhs - rhs) / scale)
    detail(f"recurrence residual (relative to term size) {worst:.1e} (tol 1e-12)")
    assert worst < 1e-12


@pytest.mark.criterion(8, "numerical oracles")
@pytest.mark.parametrize("m", [1, 2, 3])
def test_c8_f_alpha_monte_carlo(m, detail):
    alpha, sigma_s = 1.0, 1.0
    u = np.random.default_rng(100 + m).standard_normal((1_000_000, m)) * sigma_s
    r = np.linalg.norm(u, axis=1)
    inside = r <= 1.0 / alpha
    g2 = np.where(inside, 4.0 * alpha**2 * (alpha * r - 1.0) ** 2, 0.0)  # sum of g_k^2 over the group
    sg = np.where(inside, 2.0 * alpha**2 * r * r - 2.0 * alpha * r, 0.0)  # sum of s_k g_k
    F, F_prime = f_alpha_moments(m, alpha, sigma_s)
    z = (g2.mean() - F) / (g2.std(ddof=1) / 1e3)
    z_prime = (sg.mean() - F_prime) / (sg.std(ddof=1) / 1e3)
    detail(f"m={m}: F={F:.5f} z={z:+.2f}, F'={F_prime:.5f} z={z_prime:+.2f} (|z|<=3)")
    assert abs(z) <= 3.0
    assert abs(z_prime) <= 3.0
