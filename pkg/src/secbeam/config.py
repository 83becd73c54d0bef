"""Experiment configuration: one JSON document per experiment.

Unknown keys are rejected at every level so a typo fails fast instead of
silently falling back to a default.  Validation errors name the offending
field.  The schema is documented in docs/config_schema.md.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .channel import Scenario, UncertaintyModel
from .diffusion import DiffusionSchedule
from .secrecy import ParadigmConfig
from .training import TrainingConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")

_TOP_KEYS = {"name", "scenario", "scenario_file", "uncertainty",
             "uncertainty_scale", "paradigm", "diffusion", "training"}
_PARADIGM_KEYS = {"paradigm", "c_eve", "p_eve", "mc_samples_train",
                  "mc_samples_eval"}
_DIFFUSION_KEYS = {"steps", "beta_start", "beta_end"}
_TRAINING_KEYS = {"epochs", "learning_rate", "batch_size", "actor_batch_size",
                  "replay_capacity", "soft_update_tau", "actor_variant",
                  "master_seed", "eval_every", "eval_episodes",
                  "randomize_horizontal_m", "randomize_vertical_m",
                  "grad_clip", "record_timing"}


@dataclass
class ExperimentSpec:
    name: str
    config: TrainingConfig
    source_path: str
    sha256: str


def _reject_unknown(d: dict, allowed: set, section: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")


def _section(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{key}: expected an object")
    return value


def load_experiment(path) -> ExperimentSpec:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        data = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _reject_unknown(data, _TOP_KEYS, "config")

    name = data.get("name")
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ConfigError("name: required, filesystem-safe "
                          "([A-Za-z0-9._-]+)")

    if "scenario" in data and "scenario_file" in data:
        raise ConfigError("scenario: give either 'scenario' or "
                          "'scenario_file', not both")
    try:
        if "scenario_file" in data:
            scen_path = (path.parent / data["scenario_file"]).resolve()
            scenario = Scenario.from_json(scen_path)
        elif "scenario" in data:
            scenario = Scenario.from_json_dict(data["scenario"])
        else:
            scenario = Scenario()

        uncertainty = (UncertaintyModel.from_json_dict(data["uncertainty"])
                       if "uncertainty" in data else UncertaintyModel())
        scale = data.get("uncertainty_scale", 1.0)
        if not isinstance(scale, (int, float)) or scale < 0:
            raise ConfigError("uncertainty_scale: must be a number >= 0")
        uncertainty = uncertainty.scaled(float(scale))

        pd = _section(data, "paradigm")
        _reject_unknown(pd, _PARADIGM_KEYS, "paradigm")
        paradigm = ParadigmConfig(**pd)

        dd = _section(data, "diffusion")
        _reject_unknown(dd, _DIFFUSION_KEYS, "diffusion")
        schedule = DiffusionSchedule(**dd)

        td = _section(data, "training")
        _reject_unknown(td, _TRAINING_KEYS, "training")
        if "grad_clip" in td and td["grad_clip"] is not None:
            td = dict(td, grad_clip=float(td["grad_clip"]))
        config = TrainingConfig(paradigm=paradigm, scenario=scenario,
                                uncertainty=uncertainty, schedule=schedule,
                                **td)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))

    return ExperimentSpec(name=name, config=config, source_path=str(path),
                          sha256=hashlib.sha256(raw).hexdigest())


def with_variant(spec_config: TrainingConfig, variant: str) -> TrainingConfig:
    return replace(spec_config, actor_variant=variant)


def with_paradigm(spec_config: TrainingConfig, paradigm: str) -> TrainingConfig:
    return replace(spec_config,
                   paradigm=replace(spec_config.paradigm, paradigm=paradigm))
