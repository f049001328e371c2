"""YAML experiment configs.

A config is a flat mapping of ``ExperimentSpec`` fields; solver settings
go in a nested ``solver`` mapping. Missing keys keep their defaults.
"""

from __future__ import annotations

import yaml

from .solver import SolverConfig
from .synth import ExperimentSpec


class ConfigError(ValueError):
    """The config file is unreadable or describes an invalid experiment."""


def spec_from_dict(data, base: ExperimentSpec | None = None) -> ExperimentSpec:
    base = base or ExperimentSpec()
    if data is None:
        return base
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of experiment fields")
    data = dict(data)
    unknown = set(data) - set(ExperimentSpec.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    solver = data.pop("solver", None)
    try:
        if solver is not None:
            if not isinstance(solver, dict):
                raise ConfigError("'solver' must be a mapping")
            bad = set(solver) - set(SolverConfig.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown solver keys: {sorted(bad)}")
            data["solver"] = base.solver.replace(**solver)
        return base.replace(**data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return spec_from_dict(data)


def dump_spec(spec: ExperimentSpec, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(spec.to_dict(), fh, sort_keys=False)
