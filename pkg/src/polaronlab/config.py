"""TOML configuration shared by all subcommands.

Every key has a default; ``resolve`` returns the complete configuration with
all defaults written out, and unknown keys are rejected all at once.
"""

from __future__ import annotations

import copy
import math
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .model import DispersionSpec, FormFactorSpec, KGridSpec, ModelSpec

DEFAULTS = {
    "dimension": 1,
    "alpha": 0.25,
    "seed": 0,
    "dispersion": {"kind": "constant", "c0": 1.0, "a": 0.0, "table": []},
    "form_factor": {"kind": "gaussian", "g0": 0.6, "width": 1.0, "kappa": "inf"},
    "grid": {"dk": 0.25, "kmax": 1.5},
    "solver": {"N_max": 4, "tol": 1e-12, "krylov_dim": 60, "max_iter": 5000, "size_limit": 2_000_000},
    "spectrum": {"P_axis": [0.0, 0.125, 0.25, 0.5, 0.75, 1.0], "axis": 0, "edge_P": [0.5], "edge_n_max": 2},
    "mass": {"h": "auto", "levels": 2, "axis": 0},
    "scaling": {"khat": [1.0], "t": 4.0, "eps": [0.4, 0.3, 0.2, 0.15, 0.1], "boundary": "one-sided",
                "T": 0.0, "phi_width": 1.0, "nodes": 16},
    "mc": {
        "sweeps": 20000, "burn_in": 1000, "chains": 2, "thin": 1,
        "kernel": "discrete", "action_method": "factorized", "segment": 0, "tune": True,
        "tune_interval": 50, "target_acceptance": 0.5,
        "t": 40.0, "dt": 0.1, "T_minus": 4.0, "T_plus": 4.0, "boundary": "free-both", "phi_table": [],
        "lags": [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0], "k_alt": 0.3,
        "k_list": [[0.3], [0.6]], "write_chains": False,
    },
    "kernel": {"kappas": [1, 2, 4, 8, 16, 32, 64, 128, 256], "cutoff": "froehlich-exp",
               "radii": [0.5, 1.0, 2.0, 4.0], "times": [0.0, 0.5, 1.0], "model_radii": [0.0, 0.5, 1.0, 2.0]},
    "toy": {
        "dimension": 3, "minima": [[0.0, 2, 0.5]], "theta0": 0.3, "theta1": 0.2, "gap": 1.0,
        "phi_width": 1.0, "phi_center": [], "angular_order": 41, "angular_points_2d": 128,
        "k": [0.5, 0.0, 0.0], "t": 0.05, "T_ladder": [10, 20, 40, 80, 160],
        "eps": [0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125, 0.0015625],
        "k_list": [[0.5, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.5, 0.0], [1.0, 1.0, 1.0]], "clt_t": 1.0,
    },
    "verify": {"criteria": [1, 2, 3, 4, 5, 6, 7, 8, 9], "inject": "none", "mc_sweeps": 20000, "mc_chains": 3},
}

FREE_FORM = {("dispersion", "table"), ("mc", "phi_table"), ("toy", "minima")}


class ConfigError(ValueError):
    pass


def _walk_unknown(cfg, defaults, prefix, out):
    for key, val in cfg.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            out.append(path)
        elif isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                out.append(f"{path} (expected a table)")
            else:
                _walk_unknown(val, defaults[key], path + ".", out)


def _merge(defaults, cfg):
    out = copy.deepcopy(defaults)
    for key, val in cfg.items():
        if isinstance(defaults.get(key), dict):
            out[key] = _merge(defaults[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _check_types(cfg, defaults, prefix, bad):
    for key, dval in defaults.items():
        val = cfg[key]
        path = f"{prefix}{key}"
        if isinstance(dval, dict):
            _check_types(val, dval, path + ".", bad)
        elif isinstance(dval, bool):
            if not isinstance(val, bool):
                bad.append(f"{path} (expected true/false)")
        elif isinstance(dval, (int, float)) and not isinstance(dval, bool):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                bad.append(f"{path} (expected a number)")
        elif isinstance(dval, list):
            if not isinstance(val, list):
                bad.append(f"{path} (expected a list)")


def resolve(cfg: dict | None) -> dict:
    """Validate user keys and return the full configuration with defaults."""
    cfg = cfg or {}
    unknown = []
    _walk_unknown(cfg, DEFAULTS, "", unknown)
    if unknown:
        raise ConfigError("unknown configuration keys: " + ", ".join(sorted(unknown)))
    full = _merge(DEFAULTS, cfg)
    bad = []
    _check_types(full, DEFAULTS, "", bad)
    if bad:
        raise ConfigError("invalid configuration values: " + ", ".join(bad))
    if full["mass"]["h"] == "auto":
        full["mass"]["h"] = full["grid"]["dk"] / 4.0
    return full


def load(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _float(v):
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"expected a number or 'inf', got {v!r}")
    return float(v)


def model_from_config(cfg: dict) -> ModelSpec:
    d = int(cfg["dimension"])
    dd = cfg["dispersion"]
    disp = DispersionSpec(dd["kind"], float(dd["c0"]), float(dd["a"]), tuple(tuple(r) for r in dd["table"]))
    ff = cfg["form_factor"]
    form = FormFactorSpec(ff["kind"], float(ff["g0"]), float(ff["width"]), _float(ff["kappa"]))
    grid = KGridSpec(float(cfg["grid"]["dk"]), float(cfg["grid"]["kmax"]), d)
    return ModelSpec(d, disp, form, float(cfg["alpha"]), grid)
