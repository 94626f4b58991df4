"""Config file handling for the command-line pipelines.

A single INI-style file with ``[simulation]``, ``[estimator]`` and
``[outlier]`` sections configures both the dataset generator and the solver.
Presets named after the experiments (``psr``, ``psr-c``, ``sim``, ``sim-c``)
provide the baseline values; a config file and command-line switches override
them.  The SHA-256 hash of the fully resolved configuration is embedded in
every output file for provenance.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math

from .estimator import EstimatorConfig
from .geometry import Dof
from .mixture import OutlierConfig
from .simulation import Experiment, SimConfig, estimator_preset, sim_preset


class ConfigError(ValueError):
    """Unusable configuration file or option combination."""


_SIM_KEYS = {
    "experiment": str,
    "num_configurations": int,
    "num_landmarks": int,
    "range_min_m": float,
    "range_max_m": float,
    "azimuth_min_rad": float,
    "azimuth_max_rad": float,
    "cluster_fraction": float,
    "cluster_size": int,
    "cluster_spread_std_m": float,
    "runs_per_configuration": int,
    "trans_x_bound_m": float,
    "trans_y_bound_m": float,  # or "none"
    "rot_bound_rad": float,
    "noise_r_std_m": float,
    "noise_theta_std_rad": float,
    "doppler_std_mps": float,  # or "none"
    "fov_half_angle_rad": float,  # or "none"
    "dt_s": float,
    "dt_std_s": float,
    "seed": int,
}

_SIM_FIELD_BY_KEY = {
    "experiment": "experiment",
    "num_configurations": "num_configurations",
    "num_landmarks": "num_landmarks",
    "range_min_m": "range_min",
    "range_max_m": "range_max",
    "azimuth_min_rad": "azimuth_min",
    "azimuth_max_rad": "azimuth_max",
    "cluster_fraction": "cluster_fraction",
    "cluster_size": "cluster_size",
    "cluster_spread_std_m": "cluster_spread_std",
    "runs_per_configuration": "runs_per_configuration",
    "trans_x_bound_m": "trans_x_bound",
    "trans_y_bound_m": "trans_y_bound",
    "rot_bound_rad": "rot_bound",
    "noise_r_std_m": "noise_r_std",
    "noise_theta_std_rad": "noise_theta_std",
    "doppler_std_mps": "doppler_std",
    "fov_half_angle_rad": "fov_half_angle",
    "dt_s": "dt",
    "dt_std_s": "dt_std",
    "seed": "seed",
}

_NULLABLE_SIM_KEYS = {"trans_y_bound_m", "doppler_std_mps", "fov_half_angle_rad"}

_EST_KEYS = {
    "dof": int,
    "use_doppler": bool,
    "warmstart_scale": float,
    "warmstart_max_iters": int,
    "max_iters": int,
    "cost_tolerance": float,
    "step_tolerance": float,
    "damping": float,
}

_OUTLIER_KEYS = {
    "alpha": float,
    "beta": float,
    "s_min_m": float,
    "s_max_m": float,
    "sigma_theta_rad": float,  # or "none"
    "outlier_weight": float,
}

_OUTLIER_FIELD_BY_KEY = {
    "alpha": "alpha",
    "beta": "beta",
    "s_min_m": "s_min",
    "s_max_m": "s_max",
    "sigma_theta_rad": "sigma_theta",
    "outlier_weight": "outlier_weight",
}


def _parse_value(section: str, key: str, raw: str, keys: dict, nullable: set):
    if key not in keys:
        raise ConfigError(f"unknown key '{key}' in section [{section}]")
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        if key in nullable:
            return None
        raise ConfigError(f"[{section}] {key} cannot be empty")
    typ = keys[key]
    try:
        if typ is bool:
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def load_config(
    path: str | None = None,
    preset: str | None = None,
    scale: float | None = None,
    seed: int | None = None,
) -> tuple[SimConfig, EstimatorConfig]:
    """Resolve (simulation, estimator) configs from preset, file and switches."""
    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path!r}")

    experiment = preset or parser.get("simulation", "experiment", fallback=None)
    if experiment is None:
        raise ConfigError("no preset given and no [simulation] experiment in the config file")
    try:
        sim = sim_preset(Experiment(experiment.strip().lower()))
    except ValueError as exc:
        raise ConfigError(f"unknown experiment {experiment!r}") from exc

    overrides = {}
    if parser.has_section("simulation"):
        for key, raw in parser.items("simulation"):
            value = _parse_value("simulation", key, raw, _SIM_KEYS, _NULLABLE_SIM_KEYS)
            if key == "experiment":
                continue
            overrides[_SIM_FIELD_BY_KEY[key]] = value
    if overrides:
        sim = dataclasses.replace(sim, **overrides)
    if seed is not None:
        sim = dataclasses.replace(sim, seed=seed)
    if scale is not None:
        if not (0.0 < scale <= 1.0):
            raise ConfigError("--scale must be in (0, 1]")
        sim = dataclasses.replace(
            sim, runs_per_configuration=max(1, round(sim.runs_per_configuration * scale))
        )

    est = estimator_preset(sim)
    est_overrides = {}
    if parser.has_section("estimator"):
        for key, raw in parser.items("estimator"):
            value = _parse_value("estimator", key, raw, _EST_KEYS, set())
            if key == "dof":
                value = Dof(value)
            est_overrides[key] = value
    if est_overrides:
        est = dataclasses.replace(est, **est_overrides)
    if parser.has_section("outlier"):
        out_overrides = {}
        for key, raw in parser.items("outlier"):
            value = _parse_value("outlier", key, raw, _OUTLIER_KEYS, {"sigma_theta_rad"})
            out_overrides[_OUTLIER_FIELD_BY_KEY[key]] = value
        est = dataclasses.replace(est, outlier=dataclasses.replace(est.outlier, **out_overrides))
    return sim, est


def config_dict(sim: SimConfig, est: EstimatorConfig) -> dict:
    """Fully resolved configuration as plain JSON-compatible data."""
    sim_d = dataclasses.asdict(sim)
    sim_d["experiment"] = sim.experiment.value
    est_d = dataclasses.asdict(est)
    est_d["dof"] = int(est.dof)
    return {"simulation": sim_d, "estimator": est_d}


def config_hash(sim: SimConfig, est: EstimatorConfig) -> str:
    blob = json.dumps(config_dict(sim, est), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def default_register_config(
    dof: int = 2,
    use_doppler: bool = False,
    outlier_weight: float = 0.25,
    fov_half_angle: float = math.radians(55.0),
) -> EstimatorConfig:
    """Estimator defaults for registering standalone scan files."""
    outlier = OutlierConfig(
        outlier_weight=outlier_weight,
        sigma_theta=0.5 * fov_half_angle if outlier_weight > 0 else None,
    )
    return EstimatorConfig(dof=Dof(dof), use_doppler=use_doppler, outlier=outlier)
