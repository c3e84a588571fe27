"""Monte Carlo identification experiments and theory-versus-simulation sweeps.

Every random draw is keyed by ``(master_seed, system index, trial index)``
through :class:`numpy.random.SeedSequence`, so a curve does not depend on
how the work is split across threads. Systems are the unit of parallel
work; per-system results are folded in index order.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

from .errors import DivergenceError
from .filter import FilterConfig, run_filter
from .io import write_csv
from .mgmodel import MGParams, generate_system, system_seed
from .theory import (
    averaged_theory,
    kappa_opt,
    p_opt,
    steady_state_msd,
    theory_constants,
    transient_model,
)

__all__ = [
    "ExperimentSpec",
    "LearningCurve",
    "Table",
    "noise_variance",
    "ensemble_noise_variance",
    "trial_seed",
    "steady_state",
    "settle_iterations",
    "lms_settle_iterations",
    "run_identification",
    "sweep_kappa",
    "sweep_partition",
    "TransientComparison",
    "compare_transient",
    "iterations_to_threshold",
    "per_system_transient",
    "to_db",
]


def to_db(x):
    return 10.0 * np.log10(x)


def noise_variance(system, snr_db: float, sigma_x2: float = 1.0,
                   reference: str = "input") -> float:
    """Measurement-noise variance for a given SNR.

    ``reference="input"`` sets ``sigma_v2 = sigma_x2 10^(-snr/10)``, the same
    for every system. ``reference="output"`` scales by the system energy,
    ``sigma_v2 = sigma_x2 ||s||^2 10^(-snr/10)``.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    if reference == "input":
        return float(sigma_x2 * 10.0 ** (-snr_db / 10.0))
    if reference == "output":
        s = np.asarray(system, dtype=float)
        return float(sigma_x2 * (s @ s) * 10.0 ** (-snr_db / 10.0))
    raise ValueError(f"reference must be 'input' or 'output', got {reference!r}")


def ensemble_noise_variance(params: MGParams, snr_db: float, sigma_x2: float = 1.0,
                            reference: str = "input") -> float:
    """Noise variance used by the averaged theory (mean system energy for ``"output"``)."""
    if reference == "output":
        return sigma_x2 * params.L * params.sparsity * params.sigma_s2 * 10.0 ** (-snr_db / 10.0)
    return noise_variance(None, snr_db, sigma_x2, reference)


def trial_seed(master_seed, system_index: int, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(1, int(system_index), int(trial_index)))


@dataclass(frozen=True)
class ExperimentSpec:
    """One identification experiment.

    Either give explicit ``systems`` (shape ``(L,)`` or ``(K, L)``) or an
    M-G ``model`` with ``n_systems``. ``snr_reference`` selects how the
    noise level follows from ``snr_db`` (see :func:`noise_variance`). With ``kappa="opt"`` each system is
    identified with its own optimal ``kappa`` from the steady-state theory;
    otherwise ``cfg.kappa`` is used.
    """

    cfg: FilterConfig
    iterations: int
    snr_db: float = 40.0
    systems: np.ndarray | None = None
    model: MGParams | None = None
    n_systems: int = 1
    trials_per_system: int = 10
    master_seed: int = 0
    sigma_x2: float = 1.0
    kappa: str | float = "fixed"
    snr_reference: str = "input"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.trials_per_system < 1:
            raise ValueError("trials_per_system must be >= 1")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"snr_db must be finite or +inf, got {self.snr_db}")
        if (self.systems is None) == (self.model is None):
            raise ValueError("give exactly one of systems or model")
        if self.model is not None and self.model.L != self.cfg.L:
            raise ValueError(f"model length {self.model.L} != filter length {self.cfg.L}")
        if self.systems is not None:
            s = np.atleast_2d(np.asarray(self.systems, dtype=float))
            if s.shape[1] != self.cfg.L:
                raise ValueError(f"system length {s.shape[1]} != filter length {self.cfg.L}")
            object.__setattr__(self, "systems", s)
            object.__setattr__(self, "n_systems", s.shape[0])

    def system(self, i: int) -> np.ndarray:
        if self.systems is not None:
            return self.systems[i]
        return generate_system(self.model, system_seed(self.master_seed, i))

    def describe(self) -> dict:
        d = {
            "cfg": asdict(self.cfg), "iterations": self.iterations, "snr_db": self.snr_db,
            "n_systems": self.n_systems, "trials_per_system": self.trials_per_system,
            "master_seed": self.master_seed, "sigma_x2": self.sigma_x2, "kappa": self.kappa,
            "snr_reference": self.snr_reference,
        }
        if self.model is not None:
            d["model"] = asdict(self.model)
        else:
            d["systems_sha256"] = hashlib.sha256(self.systems.tobytes()).hexdigest()
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.describe(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class LearningCurve:
    """Average of ``||w_n - s||^2`` over all systems and trials.

    ``per_system[i]`` is the trial average for system ``i``; ``kappas`` and
    ``sigma_v2`` record what each system was run with.
    """

    msd: np.ndarray
    per_system: np.ndarray
    systems: np.ndarray
    kappas: np.ndarray
    sigma_v2: np.ndarray
    metadata: dict = field(default_factory=dict)

    def steady_state(self, fraction: float = 0.1) -> float:
        return steady_state(self.msd, fraction)

    def to_csv(self, path) -> None:
        write_csv(path, {"iteration": np.arange(self.msd.size), "msd": self.msd,
                         "msd_db": to_db(self.msd)})


def steady_state(msd, fraction: float = 0.1) -> float:
    """Mean of the final ``fraction`` of a learning curve."""
    msd = np.asarray(msd)
    k = max(1, int(round(fraction * msd.shape[-1])))
    return float(np.mean(msd[..., -k:]))


def _system_job(spec: ExperimentSpec, i: int):
    s = spec.system(i)
    sigma_v2 = noise_variance(s, spec.snr_db, spec.sigma_x2, spec.snr_reference)
    cfg = spec.cfg
    if spec.kappa == "opt":
        consts = theory_constants(s, cfg, spec.sigma_x2, sigma_v2)
        cfg = cfg.replace(kappa=kappa_opt(consts).kappa)
    elif spec.kappa != "fixed":
        cfg = cfg.replace(kappa=float(spec.kappa))

    T, N = spec.trials_per_system, spec.iterations
    x = np.empty((T, N))
    v = np.empty((T, N))
    for j in range(T):
        rng = np.random.default_rng(trial_seed(spec.master_seed, i, j))
        x[j] = rng.standard_normal(N)
        v[j] = rng.standard_normal(N)
    x *= math.sqrt(spec.sigma_x2)
    d = fftconvolve(x, s[None, :], axes=1)[:, :N] + math.sqrt(sigma_v2) * v
    run = run_filter(x, d, cfg, s, sigma_x2=spec.sigma_x2,
                     trial_ids=[f"master_seed={spec.master_seed} system={i} trial={j}"
                                for j in range(T)])
    return s, cfg.kappa, sigma_v2, run.msd.mean(axis=0)


def run_identification(spec: ExperimentSpec, threads: int = 1) -> LearningCurve:
    """Run every (system, trial) pair of ``spec`` and average the squared deviation.

    Raises
    ------
    DivergenceError
        Naming the ``(system, trial)`` pair and iteration that diverged.
    """
    K = spec.n_systems
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: _system_job(spec, i), range(K)))
    else:
        results = [_system_job(spec, i) for i in range(K)]
    systems = np.stack([r[0] for r in results])
    per_system = np.stack([r[3] for r in results])
    return LearningCurve(
        msd=per_system.mean(axis=0),
        per_system=per_system,
        systems=systems,
        kappas=np.array([r[1] for r in results]),
        sigma_v2=np.array([r[2] for r in results]),
        metadata={"spec": spec.describe(), "spec_hash": spec.digest(),
                  "master_seed": spec.master_seed, "systems": K,
                  "trials_per_system": spec.trials_per_system},
    )


def settle_iterations(curve_fn, d_inf: float, slowest_rate: float, tol: float = 0.01,
                      window: float = 0.1, n_max: int = 10**6) -> int:
    """Run length whose final ``window`` starts after the predicted curve has settled.

    Settled means ``|D_n - D_inf| <= tol * D_inf``; the result is also at
    least five time constants ``1/(1 - slowest_rate)``.
    """
    tau = 1.0 / max(1e-300, 1.0 - slowest_rate)
    step = max(1, int(tau // 50))
    n = np.arange(0, n_max, step)
    excess = np.abs(np.asarray(curve_fn(n)) - d_inf)
    late = np.flatnonzero(excess > tol * d_inf)
    n_settle = n[late[-1]] + step if late.size else 0
    n_settle = max(n_settle, 5.0 * tau)
    return int(math.ceil(n_settle / (1.0 - window)))


def lms_settle_iterations(norm2: float, d_floor: float, mu: float, L: int,
                          sigma_x2: float = 1.0, tol: float = 0.01, window: float = 0.1) -> int:
    """Run length for an LMS-rate decay from ``norm2`` to within ``tol`` of ``d_floor``.

    Uses the plain-LMS mean-square rate ``1 - mu sigma_x2 (2 - (L+2) mu sigma_x2)``,
    which bounds how fast the nonzero taps can settle whatever ``kappa`` is.
    The final ``window`` fraction of the run then lies in steady state.
    """
    rate = mu * sigma_x2 * (2.0 - (L + 2) * mu * sigma_x2)
    if not 0.0 < rate < 1.0:
        raise ValueError(f"step size {mu} gives no mean-square convergence")
    n = math.log(max(norm2, d_floor) / (tol * d_floor)) / -math.log1p(-rate)
    return int(math.ceil(n / (1.0 - window)))


def _iterations_for(avg, mu: float, sigma_x2: float) -> int:
    return max(settle_iterations(avg.curve, avg.ams_msd, max(avg.lambdas_prime)),
               lms_settle_iterations(avg.norm2_bar, avg.ams_msd, mu, avg.params.L, sigma_x2))


@dataclass
class Table:
    """Column-oriented result table with CSV export."""

    columns: dict
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.columns[key]

    def __len__(self):
        return len(next(iter(self.columns.values())))

    def to_csv(self, path) -> None:
        write_csv(path, self.columns)


def sweep_kappa(spec: ExperimentSpec, kappa_grid, threads: int = 1) -> Table:
    """Steady-state MSD against ``kappa``: simulation next to the closed form.

    The theory column averages the per-system prediction over the same
    systems and noise levels the simulation uses; ``kappa_opt`` per system
    is reported in the metadata.
    """
    grid = np.asarray(kappa_grid, dtype=float)
    if grid.ndim != 1 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("kappa grid must be positive and strictly ascending")
    sim = np.empty(grid.size)
    theory = np.empty(grid.size)
    curves = []
    consts = None
    for idx, k in enumerate(grid):
        try:
            curve = run_identification(replace(spec, kappa=float(k)), threads)
        except DivergenceError as exc:
            exc.partial = Table({"kappa": grid[:idx], "msd_sim": sim[:idx],
                                 "msd_theory": theory[:idx]}, {"P": spec.cfg.P})
            raise
        curves.append(curve)
        sim[idx] = curve.steady_state()
        if consts is None:
            consts = [theory_constants(s, spec.cfg, spec.sigma_x2, v2)
                      for s, v2 in zip(curve.systems, curve.sigma_v2)]
        theory[idx] = np.mean([steady_state_msd(k, c) for c in consts])
    kopts = np.array([kappa_opt(c).kappa for c in consts])
    return Table(
        {"kappa": grid, "msd_sim": sim, "msd_theory": theory,
         "msd_sim_db": to_db(sim), "msd_theory_db": to_db(theory)},
        metadata={"P": spec.cfg.P, "kappa_opt": kopts.tolist(),
                  "kappa_opt_geomean": float(np.exp(np.mean(np.log(kopts)))),
                  "curves": curves},
    )


def sweep_partition(params: MGParams, p_grid, mu: float, alpha: float = 1.0,
                    snr_db: float = 40.0, systems: int = 100, trials: int = 10,
                    iterations: int | None = None, master_seed: int = 0,
                    sigma_x2: float = 1.0, delta: float = 1e-8, snr_reference: str = "input",
                    threads: int = 1) -> Table:
    """Averaged steady-state MSD against ``P`` with per-system optimal ``kappa``.

    The theory column is the averaged minimum steady-state MSD at the
    noise level from :func:`ensemble_noise_variance`.
    """
    grid = [int(P) for P in p_grid]
    if any(not 1 <= P <= params.L for P in grid):
        raise ValueError(f"partition sizes must lie in [1, L={params.L}]")
    sv2_bar = ensemble_noise_variance(params, snr_db, sigma_x2, snr_reference)
    rows = {"P": [], "kappa_opt": [], "msd_sim": [], "msd_theory": []}
    curves = []
    for P in grid:
        avg = averaged_theory(params, P, mu, alpha, sigma_x2, sv2_bar)
        n_iter = iterations or _iterations_for(avg, mu, sigma_x2)
        spec = ExperimentSpec(FilterConfig(params.L, P, mu, alpha, 0.0, delta), n_iter, snr_db,
                              model=params, n_systems=systems, trials_per_system=trials,
                              master_seed=master_seed, sigma_x2=sigma_x2, kappa="opt",
                              snr_reference=snr_reference)
        try:
            curve = run_identification(spec, threads)
        except DivergenceError as exc:
            exc.partial = Table({k: np.asarray(v) for k, v in rows.items()})
            raise
        curves.append(curve)
        rows["P"].append(P)
        rows["kappa_opt"].append(float(np.mean(curve.kappas)))
        rows["msd_sim"].append(curve.steady_state())
        rows["msd_theory"].append(avg.ams_msd)
    cols = {k: np.asarray(v) for k, v in rows.items()}
    cols["msd_sim_db"] = to_db(cols["msd_sim"])
    cols["msd_theory_db"] = to_db(cols["msd_theory"])
    return Table(cols, metadata={"sigma_v2_bar": sv2_bar, "curves": curves})


def iterations_to_threshold(msd, threshold_db: float):
    """First iteration at which the curve is at or below ``threshold_db``; None if never."""
    hit = np.flatnonzero(to_db(np.asarray(msd)) <= threshold_db)
    return int(hit[0]) if hit.size else None


@dataclass
class TransientComparison:
    curve_bs: LearningCurve
    curve_l0: LearningCurve
    theory_bs: np.ndarray
    theory_l0: np.ndarray
    P_bs: int
    mu_bs: float
    mu_l0: float
    threshold_db: float
    iters_bs: int | None
    iters_l0: int | None
    averaged_bs: object = None
    averaged_l0: object = None

    def table(self) -> Table:
        n = np.arange(self.curve_bs.msd.size)
        return Table({
            "iteration": n,
            "msd_bs": self.curve_bs.msd, "theory_bs": self.theory_bs,
            "msd_l0": self.curve_l0.msd, "theory_l0": self.theory_l0,
        })


def compare_transient(params: MGParams, snr_db: float, mu_bs: float, mu_l0: float,
                      P_bs: int | None = None, alpha: float = 1.0, systems: int = 100,
                      trials: int = 10, iterations: int | None = None, master_seed: int = 0,
                      sigma_x2: float = 1.0, delta: float = 1e-8, threshold_db: float = -35.0,
                      p_max: int = 50, snr_reference: str = "input",
                      threads: int = 1) -> TransientComparison:
    """Learning curves of BS-LMS (``P_bs``, default the best ``P``) and l0-LMS.

    Both algorithms see the same systems and the same input/noise records,
    each with its per-system optimal ``kappa``.
    """
    sv2_bar = ensemble_noise_variance(params, snr_db, sigma_x2, snr_reference)
    if P_bs is None:
        P_bs = p_opt(params, mu_bs, alpha, sigma_x2, sv2_bar, p_max=p_max)
    avg_bs = averaged_theory(params, P_bs, mu_bs, alpha, sigma_x2, sv2_bar)
    avg_l0 = averaged_theory(params, 1, mu_l0, alpha, sigma_x2, sv2_bar)
    if iterations is None:
        iterations = max(_iterations_for(avg_bs, mu_bs, sigma_x2),
                         _iterations_for(avg_l0, mu_l0, sigma_x2))

    def spec(P, mu):
        return ExperimentSpec(FilterConfig(params.L, P, mu, alpha, 0.0, delta), iterations,
                              snr_db, model=params, n_systems=systems, trials_per_system=trials,
                              master_seed=master_seed, sigma_x2=sigma_x2, kappa="opt",
                              snr_reference=snr_reference)

    curve_bs = run_identification(spec(P_bs, mu_bs), threads)
    try:
        curve_l0 = run_identification(spec(1, mu_l0), threads)
    except DivergenceError as exc:
        n = np.arange(iterations)
        exc.partial = Table({"iteration": n, "msd_bs": curve_bs.msd, "theory_bs": avg_bs.curve(n)})
        raise
    n = np.arange(iterations)
    return TransientComparison(
        curve_bs, curve_l0, avg_bs.curve(n), avg_l0.curve(n), P_bs, mu_bs, mu_l0, threshold_db,
        iterations_to_threshold(curve_bs.msd, threshold_db),
        iterations_to_threshold(curve_l0.msd, threshold_db),
        avg_bs, avg_l0,
    )


def per_system_transient(curve: LearningCurve, cfg: FilterConfig, sigma_x2: float = 1.0):
    """Per-system predicted curves averaged in the same way as ``curve``."""
    n = np.arange(curve.msd.size)
    preds = [transient_model(s, cfg.replace(kappa=k), sigma_x2, v2).curve(n)
             for s, k, v2 in zip(curve.systems, curve.kappas, curve.sigma_v2)]
    return np.mean(preds, axis=0)
