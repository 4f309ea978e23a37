"""Scenario configuration files: strict JSON round-trip and hashing.

The on-disk format is one JSON document per scenario with explicit units in
field names (``t_sample_sec``, ``horizon_sec``, ...). Unknown keys are
errors, not warnings: silent misconfiguration is the primary failure mode
when reproducing controller behavior.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import fields

import numpy as np

from .errors import ConfigError
from .scenarios import ScenarioConfig, build_desired, make_objective, \
    make_synthesis_config

__all__ = [
    "scenario_to_dict",
    "scenario_from_dict",
    "dumps_config",
    "config_hash",
    "save_config",
    "parse_config",
    "validate_scenario",
]

_FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (tuple, list, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def scenario_to_dict(config: ScenarioConfig) -> dict:
    out = {}
    for name in _FIELD_NAMES:
        value = getattr(config, name)
        if name == "impulses":
            value = [{"time_sec": float(t), "delta_state": _jsonable(d)}
                     for t, d in value]
        out[name] = _jsonable(value)
    return out


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("scenario config must be a JSON object")
    unknown = set(raw) - set(_FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {f.name for f in fields(ScenarioConfig)
               if f.default is f.default_factory} - set(raw)
    # required fields are those without defaults
    required = {"scenario_id", "model_name", "model_params", "q_diag",
                "p1_diag", "r_diag", "desired", "horizon_sec", "t_sample_sec",
                "dt_sec", "alpha_d_mode", "alpha_d_value", "u_min", "u_max",
                "x0", "end_time_sec"}
    missing = required - set(raw)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    kwargs = dict(raw)
    impulses = []
    for item in kwargs.get("impulses", []) or []:
        item = dict(item)
        try:
            t_ev = float(item.pop("time_sec"))
            delta = tuple(float(v) for v in item.pop("delta_state"))
        except KeyError as exc:
            raise ConfigError(f"impulse entry missing field {exc}") from exc
        if item:
            raise ConfigError(f"unknown impulse fields: {sorted(item)}")
        impulses.append((t_ev, delta))
    kwargs["impulses"] = tuple(impulses)
    for name in ("q_diag", "p1_diag", "r_diag", "u_min", "u_max", "x0"):
        kwargs[name] = tuple(float(v) for v in kwargs[name])
    if kwargs.get("nominal_control") is not None:
        kwargs["nominal_control"] = tuple(float(v) for v in kwargs["nominal_control"])
    config = ScenarioConfig(**kwargs)
    validate_scenario(config)
    return config


def validate_scenario(config: ScenarioConfig) -> None:
    """Run every constructor the scenario feeds, so each invariant is
    checked with a named-field error before any run starts."""
    model = config.make_model()
    x0 = np.asarray(config.x0, dtype=float)
    if x0.shape != (model.n,):
        raise ConfigError(f"x0 must have {model.n} components, got {x0.shape[0]}")
    for name in ("q_diag", "p1_diag"):
        if len(getattr(config, name)) != model.n:
            raise ConfigError(f"{name} must have {model.n} entries")
    if len(config.r_diag) != model.m:
        raise ConfigError(f"r_diag must have {model.m} entries")
    make_objective(config, model)
    cfg = make_synthesis_config(config)
    if cfg.box.m != model.m:
        raise ConfigError("saturation box dimension does not match model")
    build_desired(config.desired, model.n)
    for t_ev, delta in config.impulses:
        if len(delta) != model.n:
            raise ConfigError(
                f"impulse at t={t_ev} has {len(delta)} components, "
                f"expected {model.n}")
        if t_ev < 0 or t_ev > config.end_time_sec:
            raise ConfigError(f"impulse time {t_ev} outside the run window")
    nominal = config.nominal(model)
    if nominal.shape != (model.m,):
        raise ConfigError(f"nominal_control must have {model.m} components")
    if np.any(nominal < cfg.box.u_min) or np.any(nominal > cfg.box.u_max):
        raise ConfigError("nominal_control lies outside the saturation box")
    if config.switch is not None:
        sw = set(config.switch)
        if sw != {"radius", "alpha_d_feedback", "horizon_sec"}:
            raise ConfigError(
                "switch must have exactly the fields radius, "
                f"alpha_d_feedback, horizon_sec; got {sorted(sw)}")


def dumps_config(config: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(config), indent=2, sort_keys=True) + "\n"


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(scenario_to_dict(config), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def save_config(config: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_config(config))


def parse_config(path) -> ScenarioConfig:
    """Load and fully validate a scenario config file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return scenario_from_dict(raw)
