"""Run configuration: JSON ingestion, defaults, and strict validation.

The schema is the nested ``DEFAULTS`` tree.  User configs are merged over it;
any key not present in the tree is rejected by name (explicit over
permissive), and scalar types must match the default's type.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path


class ConfigError(Exception):
    """Invalid configuration (unknown key, wrong type, bad value)."""


#: Full parameter tree with defaults.  ``None`` means "derive at runtime".
DEFAULTS: dict = {
    "atom": {
        "species": "cesium",
    },
    "lattice": {
        "wavelength_nm": 865.95,
        "depth_up": 850.0,
        "polarization_angle": 0.0,
    },
    "solver": {
        "k_points": 32,
        "q_cutoff": None,
        "n_max": 15,
        "n_bands": 16,
    },
    "bands": {
        "depth": None,            # default: lattice.depth_up
        "wannier_bands": 4,
        "wannier_span": 2.0,      # +- span in units of d
        "wannier_points": 401,
    },
    "fcf": {
        "max_shift_nm": 200.0,
        "n_shifts": 81,
        "bands": 6,
    },
    "spectrum": {
        "polarization_angles": [0.3538, 0.8770, 1.3167],
        "pulse_fwhm_us": 30.0,
        "detuning_min_khz": -1800.0,
        "detuning_max_khz": 100.0,
        "n_detunings": 800,
        "temperature_2d_uk": 10.0,
        "thermal_samples": 8,
        "radial_frequency_hz": 1000.0,
        "atoms_per_point": 0,     # 0 = noiseless probabilities
        "time_step_s": None,
    },
    "fit": {
        "input_csv": None,        # CSV with detuning_khz, probability columns
        "polarization_angle": 1.3167,
        "pulse_fwhm_us": 100.0,
        "atoms_per_point": 100,
        "guess": {
            "dx": 0.26,
            "w_down": 655.0,
            "du_tot": -100.0,
            "t2d": 1.1e-5,
        },
        "thermal_samples": 6,
        "n_max": 13,
        "k_points": 16,
        "time_step_s": 6e-7,
    },
    "cool": {
        "eta_x": 0.3,
        "eta_k": 0.134,
        "coupling_khz": 36.0,     # Omega_0 / 2 pi
        "pump_down_khz": 10.0,    # R_down / 2 pi
        "pump_aux_khz": 10.0,     # R_aux / 2 pi
        "pump_up_khz": 0.0,
        "n_max": 10,
        "initial_n_bar": 1.33,
        "evolve_ms": 0.0,         # 0 = steady state only
    },
    "coolmap": {
        "eta_x_min": 0.05,
        "eta_x_max": 1.5,
        "eta_x_points": 32,
        "coupling_min_khz": 2.0,
        "coupling_max_khz": 120.0,
        "coupling_points": 32,
    },
    "engineer": {
        "task": "superposition",  # superposition | fock | coherent
        "pulse_areas": [0.30, 0.40, 0.55, 0.70],
        "fock_m": 2,
        "coherent_eta_x": 1.0,
        "n_max": 15,
    },
    "filter": {
        "single_pass_efficiency": 0.7,
        "repetitions": 3,
        "n_bar": 1.33,
        "n_max": 15,
        "atoms": 0,               # 0 = exact plateaus
        "loss_per_repetition": 1.0,
    },
}

_NUMERIC = (int, float)


def _validate(user, default, path):
    if isinstance(default, dict):
        if not isinstance(user, dict):
            raise ConfigError(f"'{path}' must be an object")
        merged = copy.deepcopy(default)
        for key, val in user.items():
            if key not in default:
                raise ConfigError(f"unknown config key '{path + key}'")
            merged[key] = _validate(val, default[key], path + key + ".")
        return merged
    loc = path.rstrip(".")
    if default is None:
        if user is not None and not isinstance(user, (_NUMERIC + (str,))):
            raise ConfigError(f"'{loc}' must be a scalar or null")
        return user
    if isinstance(default, bool):
        if not isinstance(user, bool):
            raise ConfigError(f"'{loc}' must be a boolean")
        return user
    if isinstance(default, _NUMERIC):
        if isinstance(user, bool) or not isinstance(user, _NUMERIC):
            raise ConfigError(f"'{loc}' must be a number")
        return type(default)(user) if isinstance(default, float) else user
    if isinstance(default, str):
        if not isinstance(user, str):
            raise ConfigError(f"'{loc}' must be a string")
        return user
    if isinstance(default, list):
        if not isinstance(user, list) or any(
                isinstance(v, bool) or not isinstance(v, _NUMERIC) for v in user):
            raise ConfigError(f"'{loc}' must be a list of numbers")
        return [float(v) for v in user]
    raise ConfigError(f"unsupported schema entry at '{loc}'")


def resolve(user: dict | None) -> dict:
    """Merge a user config over the defaults, rejecting unknown keys."""
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    return _validate(user, DEFAULTS, "")


def load_config(path: str | Path | None) -> dict:
    """Read, parse and validate a JSON config file (or just the defaults)."""
    if path is None:
        return resolve({})
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return resolve(data)


def dumps(config: dict) -> str:
    """Canonical serialization (sorted keys, fixed separators)."""
    return json.dumps(config, indent=2, sort_keys=True) + "\n"
