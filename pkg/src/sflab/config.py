"""Flat key=value config files with one section per command.

Example:

    [slice-approx]
    filters = f1,f3
    bases = monomial,trig_tpd
    degree = 10
    n = 200
    seeds = 5

Frequencies are written in units of pi (omega = 0.3 means 0.3*pi). Every
key has a documented default; unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import math

import numpy as np

from .errors import ConfigError

_ALL_FILTERS = "f1,f2,f3,f4,f5,f6"
_ALL_BASES = "monomial,chebyshev,bernstein,trig_tpd"

# key -> (type, default-as-string or None if required, help)
SCHEMAS = {
    "gen": {
        "n": ("int", "200", "node count"),
        "m": ("int", "16", "feature width"),
        "classes": ("int", "3", "label count"),
        "mode": ("str", "feature", "feature | planted"),
        "p": ("float", "0.05", "edge probability (feature mode)"),
        "p_in": ("float", "0.1", "within-class edge probability"),
        "p_out": ("float", "0.01", "cross-class edge probability"),
        "noise": ("float", "1.0", "feature noise scale (planted mode)"),
        "margin": ("float", "0.25", "class separation margin (feature mode)"),
        "write_splits": ("bool", "true", "emit splits.json"),
        "dataset": ("str", None, "output dataset directory"),
    },
    "slice-approx": {
        "filters": ("strlist", _ALL_FILTERS, "target filters (or custom:<path>)"),
        "bases": ("strlist", _ALL_BASES, "bases to compare"),
        "degree": ("int", "10", "polynomial degree D"),
        "n": ("int", "500", "graph size (desk-scale stand-in for 50000)"),
        "p": ("float", "0.5", "edge probability"),
        "seeds": ("int", "10", "number of random graphs"),
        "trig_k": ("int", "10", "trig truncation order K"),
        "trig_omega": ("omega", "0.5", "trig base frequency, units of pi"),
    },
    "filter-learn": {
        "filters": ("strlist", _ALL_FILTERS, "target filters (or custom:<path>)"),
        "bases": ("strlist", "monomial,trig_tpd", "bases to compare"),
        "degree": ("int", "10", "polynomial degree D"),
        "n": ("int", "500", "graph size (desk-scale stand-in for 50000)"),
        "p": ("float", "0.5", "edge probability"),
        "seeds": ("int", "10", "number of random (graph, X) pairs"),
        "feature_width": ("int", "100", "columns of the random feature matrix"),
        "feature_scale": ("float", "1.0", "scale of the random features"),
        "trig_k": ("int", "10", "trig truncation order K"),
        "trig_omega": ("omega", "0.5", "trig base frequency, units of pi"),
        "lr": ("float", "0.05", "Adam learning rate"),
        "epochs": ("int", "2000", "training epochs"),
        "tune": ("bool", "false", "grid-search lr (and K, omega for trig) on a "
                                   "held-out tuning seed before the main runs"),
        "lr_grid": ("floatlist", "0.1,0.05,0.01", "learning rates to search"),
        "k_grid": ("intlist", "2,4,6,8,10,15,20", "K grid (trig tuning)"),
        "omega_grid": ("omegalist", "0.2,0.3,0.5,0.7",
                       "omega grid in pi units (trig tuning)"),
    },
    "verify-bounds": {
        "filters": ("strlist", _ALL_FILTERS, "target filters"),
        "graph_sizes": ("intlist", "20,50", "graph node counts"),
        "degrees": ("intlist", "5,10", "polynomial degrees"),
        "p": ("float", "0.5", "edge probability"),
        "seeds": ("int", "4", "trials per (filter, size, degree) combo"),
        "basis": ("str", "monomial", "fitting basis"),
        "feature_width": ("int", "8", "columns of X"),
        "label_width": ("int", "4", "columns of W output"),
    },
    "train": {
        "dataset": ("str", None, "dataset directory"),
        "variant": ("str", "medium", "medium | large"),
        "splits": ("int", "10", "random split count"),
        "inits": ("int", "10", "random initializations per split"),
        "k": ("int", "0", "fixed K (0 = grid search)"),
        "omega": ("omega", "0", "fixed omega in pi units (0 = grid search)"),
        "k_grid": ("intlist", "2,4,6,8,10,15,20", "K grid"),
        "omega_grid": ("omegalist", "0.2,0.3,0.5,0.7", "omega grid, pi units"),
        "hidden": ("intlist", "64", "MLP hidden widths"),
        "lr": ("float", "0.01", "Adam learning rate"),
        "weight_decay": ("float", "0.0005", "L2 penalty on MLP weights"),
        "dropout": ("float", "0.5", "dropout rate inside the MLP"),
        "epochs": ("int", "1000", "max epochs"),
        "patience": ("int", "200", "early-stop patience"),
        "degree": ("int", "10", "power-series degree D"),
    },
    "precompute": {
        "dataset": ("str", None, "dataset directory"),
        "degree": ("int", "10", "max propagation power D"),
        "out_file": ("str", "features.sflab", "output file (relative to --out)"),
    },
    "eval": {
        "dataset": ("str", None, "dataset directory"),
        "checkpoint": ("str", None, "model checkpoint (.npz)"),
    },
}


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "str":
        return raw
    if kind == "omega":
        return float(raw) * math.pi
    if kind == "strlist":
        return [t.strip() for t in raw.split(",") if t.strip()]
    if kind == "intlist":
        return [int(t) for t in raw.split(",") if t.strip()]
    if kind == "floatlist":
        return [float(t) for t in raw.split(",") if t.strip()]
    if kind == "omegalist":
        return [float(t) * math.pi for t in raw.split(",") if t.strip()]
    raise ValueError(f"unknown kind {kind}")


def load_command_config(command: str, path=None) -> dict:
    """Parse the section for ``command``; apply defaults; reject unknown or
    missing-required keys."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = SCHEMAS[command]
    raw = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        if parser.has_section(command):
            raw = dict(parser.items(command))
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in section [{command}]")
        kind = schema[key][0]
        try:
            out[key] = _convert(kind, value)
        except ValueError as exc:
            raise ConfigError(f"[{command}] {key}: {exc}") from exc
    for key, (kind, default, _help) in schema.items():
        if key in out:
            continue
        if default is None:
            raise ConfigError(f"[{command}] missing required key {key!r}")
        out[key] = _convert(kind, default)
    return out


def config_echo(cfg: dict) -> dict:
    """JSON-safe copy of a parsed config."""
    echo = {}
    for k, v in cfg.items():
        if isinstance(v, (list, tuple)):
            echo[k] = [float(x) if isinstance(x, (np.floating, float)) else x
                       for x in v]
        elif isinstance(v, np.floating):
            echo[k] = float(v)
        else:
            echo[k] = v
    return echo
