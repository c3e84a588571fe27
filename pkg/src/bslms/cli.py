"""Command-line interface: ``bslms {generate,theory,experiment} ...``.

Every command writes its outputs plus a ``<name>.manifest.json`` holding the
resolved configuration, seed, artifact paths, package version and run time.
Passing a manifest back as ``--config`` repeats the run exactly.

Exit codes: 0 success, 2 configuration error, 3 a trial diverged (partial
outputs keep a ``.partial`` suffix), 4 theory-validity warning under
``--strict``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DegenerateTheoryError, DivergenceError, StepSizeError
from .filter import FilterConfig
from .io import (
    PROFILES,
    load_config,
    parse_mu,
    read_system_csv,
    write_csv,
    write_gnuplot_stub,
    write_json_atomic,
)
from .mgmodel import MGParams, generate_systems
from .sim import (
    ExperimentSpec,
    compare_transient,
    ensemble_noise_variance,
    lms_settle_iterations,
    noise_variance,
    sweep_kappa,
    sweep_partition,
    to_db,
)
from .theory import (
    ams_msd,
    averaged_theory,
    equalize_step_size,
    kappa_opt,
    p_opt,
    steady_state_msd,
    theory_constants,
    transient_model,
)

log = logging.getLogger("bslms")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INVALID = 0, 2, 3, 4


class _Run:
    """Collects artifacts and results for one command and writes the manifest."""

    def __init__(self, name: str, args, cfg: dict):
        self.name = name
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out) if args.out else None
        self.artifacts: list[str] = []
        self.results: dict = {}
        self.diagnostics: list[dict] = []
        self.status = "ok"
        self.t0 = time.perf_counter()

    def path(self, filename: str) -> Path:
        return self.out / filename

    def csv(self, filename: str, columns: dict) -> None:
        write_csv(self.path(filename), columns)
        self.artifacts.append(filename)

    def add_diagnostics(self, source: str, diags) -> None:
        for d in diags:
            self.diagnostics.append({"source": source, "code": d.code, "message": d.message})

    def manifest(self) -> dict:
        return {
            "command": self.name,
            "parameters": self.cfg,
            "master_seed": self.cfg["run"]["seed"],
            "artifacts": self.artifacts,
            "version": __version__,
            "duration_s": time.perf_counter() - self.t0,
            "status": self.status,
            "results": self.results,
            "diagnostics": self.diagnostics,
        }

    def finish(self) -> None:
        if self.out is None:
            return
        write_json_atomic(self.path(f"{self.name}.manifest.json"), self.manifest())


def _model(cfg) -> MGParams:
    m = cfg["model"]
    for key in ("p1", "p2"):
        if not 0.0 < m[key] < 1.0:
            raise ConfigError(f"must lie in (0, 1), got {m[key]!r}", field=f"model.{key}")
    if m["L"] < 1:
        raise ConfigError(f"must be a positive integer, got {m['L']!r}", field="model.L")
    if not m["sigma_s2"] > 0:
        raise ConfigError(f"must be positive, got {m['sigma_s2']!r}", field="model.sigma_s2")
    return MGParams(m["L"], m["p1"], m["p2"], m["sigma_s2"])


def _mu(cfg, section: str, key: str, L: int) -> float:
    mu = parse_mu(cfg[section][key], L)
    limit = 2.0 / ((L + 2) * cfg["signal"]["sigma_x2"])
    if not 0.0 < mu < limit:
        raise ConfigError(f"step size {mu:.6g} outside (0, {limit:.6g})", field=f"{section}.{key}")
    return mu


def _filter(cfg, L: int, P: int | None = None, mu: float | None = None) -> FilterConfig:
    f = cfg["filter"]
    P = f["P"] if P is None else P
    mu = _mu(cfg, "filter", "mu", L) if mu is None else mu
    try:
        return FilterConfig(L, P, mu, f["alpha"], f["kappa"] or 0.0, f["delta"])
    except ValueError as exc:
        raise ConfigError(str(exc), field="filter") from None


def _sigma_v2(cfg, system=None, params: MGParams | None = None) -> float:
    sig = cfg["signal"]
    if sig["sigma_v2"] is not None:
        return sig["sigma_v2"]
    if system is not None:
        return noise_variance(system, sig["snr_db"], sig["sigma_x2"], sig["snr_reference"])
    return ensemble_noise_variance(params, sig["snr_db"], sig["sigma_x2"], sig["snr_reference"])


def _scale(cfg, profile: str | None):
    run = cfg["run"]
    base = PROFILES[profile or "full"]
    if profile is not None:
        return base["systems"], base["trials"]
    return run["systems"] or base["systems"], run["trials"] or base["trials"]


# --- commands --------------------------------------------------------------

def cmd_generate(run: _Run) -> int:
    cfg = run.cfg
    params = _model(cfg)
    count = cfg["generate"]["count"]
    if count < 1:
        raise ConfigError("must be >= 1", field="generate.count")
    systems = generate_systems(params, count, cfg["run"]["seed"])
    run.csv("systems.csv", {f"system_{i}": systems[i] for i in range(count)})
    run.results = {"count": count, "L": params.L,
                   "nonzero_fraction": float(np.mean(systems != 0.0))}
    return EXIT_OK


def cmd_theory(run: _Run) -> int:
    cfg = run.cfg
    th = cfg["theory"]
    sx2 = cfg["signal"]["sigma_x2"]
    res: dict = {}
    if th["system_file"] is not None:
        s = read_system_csv(th["system_file"], th["system_index"])
        fc = _filter(cfg, s.size)
        v2 = _sigma_v2(cfg, system=s)
        consts = theory_constants(s, fc, sx2, v2)
        ko = kappa_opt(consts)
        kappa = cfg["filter"]["kappa"]
        kappa = ko.kappa if kappa is None else kappa
        tm = transient_model(s, fc, sx2, v2, kappa=kappa)
        res.update(constants=consts.to_dict(), kappa_opt=ko.kappa, d_inf_min=ko.msd,
                   kappa=kappa, d_inf=float(steady_state_msd(kappa, consts)),
                   transient=tm.to_dict())
        run.add_diagnostics("constants", consts.diagnostics)
        run.add_diagnostics("transient", tm.diagnostics)
    else:
        params = _model(cfg)
        mu = _mu(cfg, "filter", "mu", params.L)
        v2 = _sigma_v2(cfg, params=params)
        alpha = cfg["filter"]["alpha"]
        grid = th["P"] or [cfg["filter"]["P"]]
        res["averaged"] = []
        for P in grid:
            if not 1 <= P <= params.L:
                raise ConfigError(f"partition size {P} outside [1, {params.L}]", field="theory.P")
            avg = averaged_theory(params, P, mu, alpha, sx2, v2)
            res["averaged"].append(avg.to_dict())
            run.add_diagnostics(f"averaged P={P}", avg.diagnostics)
        if th["p_opt"]:
            pm = th["p_max"]
            if not 1 <= pm <= params.L:
                raise ConfigError(f"must lie in [1, {params.L}]", field="theory.p_max")
            res["p_opt"] = p_opt(params, mu, alpha, sx2, v2, p_max=pm)
            res["ams_msd_by_P"] = [ams_msd(params, P, mu, alpha, sx2, v2) for P in range(1, pm + 1)]
        res["sigma_v2"] = v2
    run.results = res
    text = json.dumps(res, indent=2, sort_keys=True, default=_plain)
    if run.out is None:
        print(text)
    else:
        write_json_atomic(run.path("theory.json"), res)
        run.artifacts.append("theory.json")
    return EXIT_OK


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(type(o).__name__)


def _check_strict(run: _Run) -> int | None:
    if run.args.strict and run.diagnostics:
        for d in run.diagnostics:
            log.error("theory validity (%s): %s: %s", d["source"], d["code"], d["message"])
        run.status = "invalid-theory"
        return EXIT_INVALID
    return None


def _exp_sweep_kappa(run: _Run, params, systems, trials) -> None:
    cfg = run.cfg
    sk = cfg["sweep_kappa"]
    L, sx2 = params.L, cfg["signal"]["sigma_x2"]
    mu = _mu(cfg, "sweep_kappa", "mu", L)
    grid = sk["kappa_grid"]
    if any(k <= 0 for k in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("must be positive and strictly ascending", field="sweep_kappa.kappa_grid")
    v2_bar = _sigma_v2(cfg, params=params)
    run.results["sweeps"] = []
    for P in sk["P"]:
        if not 1 <= P <= L:
            raise ConfigError(f"partition size {P} outside [1, {L}]", field="sweep_kappa.P")
        avg = averaged_theory(params, P, mu, cfg["filter"]["alpha"], sx2, v2_bar)
        run.add_diagnostics(f"averaged P={P}", avg.diagnostics)
    if (code := _check_strict(run)) is not None:
        raise _Stop(code)
    for P in sk["P"]:
        fc = _filter(cfg, L, P, mu).replace(kappa=0.0)
        iters = cfg["run"]["iterations"] or lms_settle_iterations(
            L * params.sparsity * params.sigma_s2, ams_msd(params, P, mu, fc.alpha, sx2, v2_bar),
            mu, L, sx2)
        spec = ExperimentSpec(fc, iters, cfg["signal"]["snr_db"], model=params, n_systems=systems,
                              trials_per_system=trials, master_seed=cfg["run"]["seed"],
                              sigma_x2=sx2, snr_reference=cfg["signal"]["snr_reference"])
        log.info("sweep-kappa P=%d: %d kappas x %d runs x %d iterations",
                 P, len(grid), systems * trials, iters)
        name = f"sweep_kappa_P{P}.csv"
        try:
            tab = sweep_kappa(spec, grid, run.args.threads)
        except DivergenceError as exc:
            exc.partial_name = name
            raise
        cols = dict(tab.columns)
        run.csv(name, cols)
        run.results["sweeps"].append({
            "P": P, "iterations": iters, "file": name,
            "kappa_opt_per_system": tab.metadata["kappa_opt"],
            "kappa_opt_geomean": tab.metadata["kappa_opt_geomean"],
            "kappa_argmin_sim": float(grid[int(np.argmin(tab["msd_sim"]))]),
        })
    gp = "sweep_kappa.gp"
    write_gnuplot_stub(run.path(gp), f"sweep_kappa_P{sk['P'][0]}.csv", "kappa",
                       ["msd_sim_db", "msd_theory_db"], logx=True)
    run.artifacts.append(gp)


def _exp_sweep_p(run: _Run, params, systems, trials) -> None:
    cfg = run.cfg
    L, sx2 = params.L, cfg["signal"]["sigma_x2"]
    mu = _mu(cfg, "sweep_p", "mu", L)
    grid = cfg["sweep_p"]["p_grid"]
    if any(not 1 <= P <= L for P in grid):
        raise ConfigError(f"partition sizes must lie in [1, {L}]", field="sweep_p.p_grid")
    v2_bar = _sigma_v2(cfg, params=params)
    for P in grid:
        avg = averaged_theory(params, P, mu, cfg["filter"]["alpha"], sx2, v2_bar)
        run.add_diagnostics(f"averaged P={P}", avg.diagnostics)
    if (code := _check_strict(run)) is not None:
        raise _Stop(code)
    log.info("sweep-p: %d partition sizes x %d runs", len(grid), systems * trials)
    try:
        tab = sweep_partition(params, grid, mu, cfg["filter"]["alpha"], cfg["signal"]["snr_db"],
                              systems, trials, cfg["run"]["iterations"], cfg["run"]["seed"], sx2,
                              cfg["filter"]["delta"], cfg["signal"]["snr_reference"],
                              run.args.threads)
    except DivergenceError as exc:
        exc.partial_name = "sweep_p.csv"
        raise
    run.csv("sweep_p.csv", tab.columns)
    run.results.update(
        sigma_v2_bar=v2_bar,
        p_opt_theory=int(grid[int(np.argmin(tab["msd_theory"]))]),
        p_argmin_sim=int(grid[int(np.argmin(tab["msd_sim"]))]),
        iterations=[int(c.msd.size) for c in tab.metadata["curves"]],
    )
    write_gnuplot_stub(run.path("sweep_p.gp"), "sweep_p.csv", "P", ["msd_sim_db", "msd_theory_db"])
    run.artifacts.append("sweep_p.gp")


def _exp_transient(run: _Run, params, systems, trials) -> None:
    cfg = run.cfg
    tr = cfg["transient"]
    L, sx2, alpha = params.L, cfg["signal"]["sigma_x2"], cfg["filter"]["alpha"]
    mu_l0 = _mu(cfg, "transient", "mu_l0", L)
    v2_bar = _sigma_v2(cfg, params=params)
    P_bs = tr["P_bs"] or p_opt(params, mu_l0, alpha, sx2, v2_bar, p_max=tr["p_max"])
    if tr["mu_bs"] == "auto":
        target = ams_msd(params, 1, mu_l0, alpha, sx2, v2_bar)
        try:
            mu_bs = equalize_step_size(params, P_bs, target, alpha, sx2, v2_bar)
        except DegenerateTheoryError as exc:
            raise ConfigError(str(exc), field="transient.mu_bs") from None
    else:
        mu_bs = _mu(cfg, "transient", "mu_bs", L)
    for P, mu in ((P_bs, mu_bs), (1, mu_l0)):
        run.add_diagnostics(f"averaged P={P}", averaged_theory(params, P, mu, alpha, sx2,
                                                               v2_bar).diagnostics)
    if (code := _check_strict(run)) is not None:
        raise _Stop(code)
    log.info("transient: P_bs=%d mu_bs=%.4g/L mu_l0=%.4g/L, %d runs", P_bs, mu_bs * L,
             mu_l0 * L, systems * trials)
    try:
        cmp = compare_transient(params, cfg["signal"]["snr_db"], mu_bs, mu_l0, P_bs, alpha,
                                systems, trials, cfg["run"]["iterations"], cfg["run"]["seed"],
                                sx2, cfg["filter"]["delta"], tr["threshold_db"], tr["p_max"],
                                cfg["signal"]["snr_reference"], run.args.threads)
    except DivergenceError as exc:
        exc.partial_name = "transient.csv"
        raise
    cols = cmp.table().columns
    for k in ("msd_bs", "theory_bs", "msd_l0", "theory_l0"):
        cols[k + "_db"] = to_db(cols[k])
    run.csv("transient.csv", cols)
    run.results.update(
        P_bs=P_bs, mu_bs=mu_bs, mu_l0=mu_l0, sigma_v2_bar=v2_bar,
        threshold_db=tr["threshold_db"], iterations=int(cmp.curve_bs.msd.size),
        iterations_to_threshold_bs=cmp.iters_bs, iterations_to_threshold_l0=cmp.iters_l0,
        steady_db_bs=float(to_db(cmp.curve_bs.steady_state())),
        steady_db_l0=float(to_db(cmp.curve_l0.steady_state())),
        lambdas_prime_bs=list(cmp.averaged_bs.lambdas_prime),
        lambdas_prime_l0=list(cmp.averaged_l0.lambdas_prime),
    )
    write_gnuplot_stub(run.path("transient.gp"), "transient.csv", "iteration",
                       ["msd_bs_db", "theory_bs_db", "msd_l0_db", "theory_l0_db"])
    run.artifacts.append("transient.gp")


class _Stop(Exception):
    def __init__(self, code):
        self.code = code


EXPERIMENTS = {
    "sweep-kappa": _exp_sweep_kappa,
    "sweep-p": _exp_sweep_p,
    "transient": _exp_transient,
}


def cmd_experiment(run: _Run) -> int:
    if run.out is None:
        raise ConfigError("experiments need an output directory (--out)")
    params = _model(run.cfg)
    systems, trials = _scale(run.cfg, run.args.profile)
    run.cfg["run"]["systems"], run.cfg["run"]["trials"] = systems, trials
    try:
        EXPERIMENTS[run.args.experiment](run, params, systems, trials)
    except DivergenceError as exc:
        run.status = "diverged"
        run.results["divergence"] = {"message": str(exc), "iteration": exc.iteration,
                                     "trial": str(exc.trial)}
        partial = getattr(exc, "partial", None)
        if partial is not None and len(partial.columns):
            name = getattr(exc, "partial_name", "result.csv") + ".partial"
            run.csv(name, partial.columns)
        log.error("%s", exc)
        return EXIT_DIVERGED
    return EXIT_OK


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI or JSON config file (a run manifest also works)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--profile", choices=sorted(PROFILES),
                        help="systems x trials scale: full (100x10) or desk (20x5)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--strict", action="store_true",
                        help="exit with code 4 when a theory validity check fails")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bslms", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bslms {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="draw M-G block-sparse responses")
    sub.add_parser("theory", parents=[common], help="dump theoretical constants as JSON")
    exp = sub.add_parser("experiment", parents=[common], help="run a Monte Carlo experiment")
    exp.add_argument("experiment", choices=sorted(EXPERIMENTS))
    return parser


COMMANDS = {"generate": cmd_generate, "theory": cmd_theory, "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    name = args.command if args.command != "experiment" else args.experiment
    try:
        if args.threads < 1:
            raise ConfigError("must be >= 1", field="--threads")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        run = _Run(name, args, cfg)
        try:
            code = COMMANDS[args.command](run)
            if code == EXIT_OK:
                strict = _check_strict(run)
                code = code if strict is None else strict
        except _Stop as stop:
            code = stop.code
        except StepSizeError as exc:
            raise ConfigError(str(exc)) from None
        run.finish()
        return code
    except ConfigError as exc:
        print(f"bslms: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
