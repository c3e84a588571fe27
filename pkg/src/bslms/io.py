"""Configuration files, CSV tables and run manifests.

Configuration is a sectioned key-value file (``[model]``, ``[filter]``, ...)
read with :mod:`configparser`, or the same structure as a JSON object.
Every key is checked against :data:`SCHEMA`; problems raise
:class:`~bslms.errors.ConfigError` naming the field as ``section.key``.
"""

from __future__ import annotations

import configparser
import json
import math
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "SCHEMA",
    "PROFILES",
    "load_config",
    "resolve_config",
    "parse_mu",
    "write_csv",
    "read_system_csv",
    "write_json_atomic",
    "write_gnuplot_stub",
]


# --- value converters -------------------------------------------------------

def _to_int(v):
    if isinstance(v, bool):
        raise ValueError("expected an integer, got a boolean")
    if isinstance(v, int):
        return v
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if isinstance(v, str) and re.fullmatch(r"\s*[+-]?\d+\s*", v):
        return int(v)
    raise ValueError(f"expected an integer, got {v!r}")


def _to_float(v):
    if isinstance(v, bool):
        raise ValueError("expected a number, got a boolean")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ValueError(f"expected a number, got {v!r}") from None


def _to_bool(v):
    if isinstance(v, bool):
        return v
    text = str(v).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {v!r}")


def _split(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [t for t in re.split(r"[,\s]+", str(v).strip()) if t]


def _to_float_list(v):
    out = [_to_float(t) for t in _split(v)]
    if not out:
        raise ValueError("expected a non-empty list of numbers")
    return out


def _to_int_list(v):
    if isinstance(v, str) and ".." in v:
        lo, hi = v.split("..", 1)
        lo, hi = _to_int(lo), _to_int(hi)
        if hi < lo:
            raise ValueError(f"empty range {v!r}")
        return list(range(lo, hi + 1))
    out = [_to_int(t) for t in _split(v)]
    if not out:
        raise ValueError("expected a non-empty list of integers")
    return out


def _to_mu(v):
    """A step size: a number, or ``"c/L"`` meaning ``c`` divided by the filter length."""
    if isinstance(v, str):
        text = v.strip()
        m = re.fullmatch(r"([^/]+)/\s*L", text)
        if m:
            _to_float(m.group(1))
            return text
        if text == "auto":
            return text
    return _to_float(v)


def _optional(conv):
    def f(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none", "null", "auto")):
            return None
        return conv(v)
    return f


def _choice(*options):
    def f(v):
        text = str(v).strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return text
    return f


def _to_str(v):
    return str(v)


def parse_mu(value, L: int) -> float:
    """Turn a converted step-size value into a number for filter length ``L``."""
    if isinstance(value, str):
        return _to_float(value.split("/")[0]) / L
    return float(value)


# --- schema ----------------------------------------------------------------

# section -> key -> (converter, default)
SCHEMA = {
    "model": {
        "L": (_to_int, 800),
        "p1": (_to_float, 0.99),
        "p2": (_to_float, 0.91),
        "sigma_s2": (_to_float, 1.0),
    },
    "filter": {
        "P": (_to_int, 4),
        "mu": (_to_mu, "0.4/L"),
        "alpha": (_to_float, 1.0),
        "kappa": (_optional(_to_float), None),
        "delta": (_to_float, 1e-8),
    },
    "signal": {
        "sigma_x2": (_to_float, 1.0),
        "snr_db": (_to_float, 40.0),
        "snr_reference": (_choice("input", "output"), "input"),
        "sigma_v2": (_optional(_to_float), None),
    },
    "run": {
        "seed": (_to_int, 0),
        "systems": (_optional(_to_int), None),
        "trials": (_optional(_to_int), None),
        "iterations": (_optional(_to_int), None),
    },
    "generate": {
        "count": (_to_int, 1),
    },
    "theory": {
        "system_file": (_optional(_to_str), None),
        "system_index": (_to_int, 0),
        "P": (_optional(_to_int_list), None),
        "p_opt": (_to_bool, False),
        "p_max": (_to_int, 50),
    },
    "sweep_kappa": {
        "P": (_to_int_list, [1, 5, 10, 20]),
        "mu": (_to_mu, "0.8/L"),
        "kappa_grid": (_to_float_list, [float(k) for k in np.logspace(-9, -5, 9)]),
    },
    "sweep_p": {
        "p_grid": (_to_int_list, list(range(1, 51))),
        "mu": (_to_mu, "0.4/L"),
    },
    "transient": {
        "mu_l0": (_to_mu, "0.4/L"),
        "mu_bs": (_to_mu, "auto"),
        "P_bs": (_optional(_to_int), None),
        "threshold_db": (_to_float, -35.0),
        "p_max": (_to_int, 50),
    },
}

PROFILES = {
    "full": {"systems": 100, "trials": 10},
    "desk": {"systems": 20, "trials": 5},
}


# --- loading ---------------------------------------------------------------

def _read_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc.strerror}") from None
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                              f"{exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        if "command" in data and "parameters" in data:  # a run manifest
            data = data["parameters"]
        return data
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f" at line {line}" if line is not None else ""
        raise ConfigError(f"{path}: parse error{where}: {exc}") from None
    return {name: dict(parser[name]) for name in parser.sections()}


def load_config(path=None) -> dict:
    """Read and validate a config file; ``None`` gives all defaults."""
    return resolve_config({} if path is None else _read_raw(path))


def resolve_config(raw: dict) -> dict:
    """Check ``raw`` against the schema and fill in defaults."""
    out = {}
    for section, value in raw.items():
        if section not in SCHEMA:
            raise ConfigError("unknown section", field=section)
        if not isinstance(value, dict):
            raise ConfigError("section must be a table of keys", field=section)
        for key in value:
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", field=f"{section}.{key}")
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        out[section] = {}
        for key, (conv, default) in keys.items():
            if key in given:
                try:
                    out[section][key] = conv(given[key])
                except ValueError as exc:
                    raise ConfigError(str(exc), field=f"{section}.{key}") from None
            else:
                out[section][key] = default
    return out


# --- output ----------------------------------------------------------------

def _atomic_write(path, write) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        return repr(v)
    return f"{v:.16e}"


def write_csv(path, columns: dict) -> None:
    """Header row, then one row per entry; floats carry 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns have different lengths")

    def write(fh):
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(_cell(c[i]) for c in cols) + "\n")

    _atomic_write(path, write)


def read_system_csv(path, index: int = 0) -> np.ndarray:
    """Column ``index`` of a system file written by the ``generate`` command."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read system file: {exc}", field="theory.system_file") from None
    except ValueError as exc:
        raise ConfigError(f"malformed system file: {exc}", field="theory.system_file") from None
    if not 0 <= index < data.shape[1]:
        raise ConfigError(f"file has {data.shape[1]} systems", field="theory.system_index")
    return data[:, index].copy()


def write_json_atomic(path, obj) -> None:
    _atomic_write(path, lambda fh: json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_gnuplot_stub(path, csv_name: str, x: str, series, *, logx=False, xlabel=None,
                       ylabel="MSD (dB)") -> None:
    """A gnuplot script that plots ``series`` columns of ``csv_name`` against ``x``."""
    lines = [
        "# plot with: gnuplot -p " + Path(path).name,
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{xlabel or x}'",
        f"set ylabel '{ylabel}'",
        "set grid",
    ]
    if logx:
        lines.append("set logscale x")
    plots = [f"'{csv_name}' using '{x}':'{s}' with lines title '{s}'" for s in series]
    lines.append("plot " + ", \\\n     ".join(plots))
    _atomic_write(path, lambda fh: fh.write("\n".join(lines) + "\n"))
