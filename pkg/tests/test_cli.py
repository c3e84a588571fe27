import csv
import json

import numpy as np
import pytest

from bslms import DivergenceError, MGParams, generate_systems
from bslms import cli
from bslms.sim import Table

SMALL = """\
[model]
L = 64
p1 = 0.95
p2 = 0.8

[filter]
mu = 0.5/L

[run]
seed = 5
systems = 2
trials = 2
iterations = 400
"""


def _write(path, text):
    path.write_text(text)
    return str(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_generate_is_deterministic(tmp_path):
    cfg = _write(tmp_path / "c.ini", "[generate]\ncount = 100\n")
    for sub in ("a", "b"):
        assert cli.main(["generate", "--config", cfg, "--seed", "9", "--out", str(tmp_path / sub)]) == 0
    a = (tmp_path / "a" / "systems.csv").read_bytes()
    assert a == (tmp_path / "b" / "systems.csv").read_bytes()
    header, data = _read_csv(tmp_path / "a" / "systems.csv")
    assert len(header) == 100 and data.shape == (800, 100)
    # columns are bit-exact copies of the library draw
    np.testing.assert_array_equal(data.T, generate_systems(MGParams(800, 0.99, 0.91), 100, 9))
    manifest = json.loads((tmp_path / "a" / "generate.manifest.json").read_text())
    assert manifest["master_seed"] == 9 and manifest["status"] == "ok"
    assert manifest["artifacts"] == ["systems.csv"]


def test_invalid_probability_names_field(tmp_path, capsys):
    cfg = _write(tmp_path / "c.ini", "[model]\np1 = 1.2\n")
    assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "model.p1" in capsys.readouterr().err
    assert not (tmp_path / "systems.csv").exists()


def test_malformed_json_reports_position(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", '{"model":\n  {"L": ,}}')
    assert cli.main(["theory", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_unknown_key_is_rejected(tmp_path, capsys):
    cfg = _write(tmp_path / "c.ini", "[filter]\nstepsize = 0.1\n")
    assert cli.main(["theory", "--config", cfg]) == 2
    assert "filter.stepsize" in capsys.readouterr().err


def test_theory_partition_optimum(tmp_path):
    for (p1, p2), expect in (((0.98, 0.82), 3), ((0.99, 0.91), 4), ((0.995, 0.955), 5)):
        cfg = _write(tmp_path / "c.ini", f"[model]\np1 = {p1}\np2 = {p2}\n"
                     "[theory]\np_opt = true\n")
        out = tmp_path / f"t{expect}"
        assert cli.main(["theory", "--config", cfg, "--out", str(out)]) == 0
        res = json.loads((out / "theory.json").read_text())
        assert res["p_opt"] == expect and len(res["ams_msd_by_P"]) == 50


def test_theory_for_explicit_system_without_attraction(tmp_path, capsys):
    cli.main(["generate", "--out", str(tmp_path), "--seed", "1"])
    cfg = _write(tmp_path / "c.ini", f"[theory]\nsystem_file = {tmp_path / 'systems.csv'}\n"
                 "[filter]\nkappa = 0\nmu = 0.5/L\n")
    assert cli.main(["theory", "--config", cfg]) == 0
    res = json.loads(capsys.readouterr().out)
    mu, L = 0.5 / 800, 800
    assert res["kappa"] == 0
    assert res["d_inf"] == pytest.approx(mu * 1e-4 * L / (2 - (L + 2) * mu), rel=1e-12)
    assert res["kappa_opt"] > 0 and res["d_inf_min"] < res["d_inf"]


def test_manifest_rerun_is_bit_identical(tmp_path):
    cfg = _write(tmp_path / "c.ini", SMALL + "[sweep_p]\np_grid = 1, 2, 4\n")
    first = tmp_path / "first"
    assert cli.main(["experiment", "sweep-p", "--config", cfg, "--out", str(first)]) == 0
    manifest = first / "sweep-p.manifest.json"
    second = tmp_path / "second"
    assert cli.main(["experiment", "sweep-p", "--config", str(manifest), "--out", str(second)]) == 0
    assert (first / "sweep_p.csv").read_bytes() == (second / "sweep_p.csv").read_bytes()
    doc = json.loads(manifest.read_text())
    assert set(doc["artifacts"]) == {"sweep_p.csv", "sweep_p.gp"}
    assert doc["parameters"]["run"]["systems"] == 2


def test_profile_overrides_configured_scale(tmp_path):
    cfg = _write(tmp_path / "c.ini", SMALL + "[sweep_p]\np_grid = 2\n")
    assert cli.main(["experiment", "sweep-p", "--config", cfg, "--profile", "desk",
                     "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "sweep-p.manifest.json").read_text())
    assert (doc["parameters"]["run"]["systems"], doc["parameters"]["run"]["trials"]) == (20, 5)


def test_strict_mode_stops_on_invalid_theory(tmp_path):
    cfg = _write(tmp_path / "c.ini", "[sweep_p]\np_grid = 50\n")
    assert cli.main(["experiment", "sweep-p", "--config", cfg, "--strict",
                     "--out", str(tmp_path)]) == 4
    doc = json.loads((tmp_path / "sweep-p.manifest.json").read_text())
    assert doc["status"] == "invalid-theory"
    assert any(d["code"] == "sparse_regime" for d in doc["diagnostics"])
    assert not (tmp_path / "sweep_p.csv").exists()


def test_divergence_writes_partial_results(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        exc = DivergenceError(123, "master_seed=5 system=0 trial=1")
        exc.partial = Table({"P": np.array([1]), "msd_sim": np.array([1e-5])})
        raise exc

    monkeypatch.setattr(cli, "sweep_partition", boom)
    cfg = _write(tmp_path / "c.ini", SMALL + "[sweep_p]\np_grid = 1, 2\n")
    assert cli.main(["experiment", "sweep-p", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert (tmp_path / "sweep_p.csv.partial").exists()
    doc = json.loads((tmp_path / "sweep-p.manifest.json").read_text())
    assert doc["status"] == "diverged" and doc["results"]["divergence"]["iteration"] == 123


def test_transient_experiment_small(tmp_path):
    cfg = _write(tmp_path / "c.ini", SMALL + "[transient]\np_max = 8\nthreshold_db = -20\n")
    assert cli.main(["experiment", "transient", "--config", cfg, "--out", str(tmp_path)]) == 0
    header, data = _read_csv(tmp_path / "transient.csv")
    assert "msd_bs_db" in header and data.shape[0] == 400
    doc = json.loads((tmp_path / "transient.manifest.json").read_text())
    assert 1 <= doc["results"]["P_bs"] <= 8


def test_sweep_kappa_small(tmp_path):
    cfg = _write(tmp_path / "c.ini", SMALL + "[sweep_kappa]\nP = 1, 4\nmu = 0.5/L\n"
                 "kappa_grid = 1e-7, 1e-6, 1e-5\n")
    assert cli.main(["experiment", "sweep-kappa", "--config", cfg, "--out", str(tmp_path)]) == 0
    for P in (1, 4):
        header, data = _read_csv(tmp_path / f"sweep_kappa_P{P}.csv")
        assert data.shape[0] == 3


def test_experiment_requires_output_dir(capsys):
    assert cli.main(["experiment", "sweep-p"]) == 2
    assert "--out" in capsys.readouterr().err


def test_console_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "bslms", "--version"], capture_output=True,
                         text=True, check=True)
    assert res.stdout.startswith("bslms ")
