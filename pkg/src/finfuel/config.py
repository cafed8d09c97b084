"""Run configuration: a JSON tree with a fixed key schema.

Example::

    {
      "model": {"lambda": 1.0, "theta": 2.0, "mu": 1.0, "sigma": 0.5},
      "cost": {"family": "quadratic", "kappa": 1.0},
      "sim": {"n_paths": 20000, "seed": 7},
      "grid": {"n_x": 401, "n_c": 101},
      "output_dir": "out"
    }

Any key may be overridden from the environment with
``FINFUEL_<SECTION>__<KEY>`` (double underscore between levels, case
insensitive), e.g. ``FINFUEL_SIM__N_PATHS=50000`` or ``FINFUEL_OUTPUT_DIR=run1``.
Values are parsed as JSON when possible, else kept as strings.  Unknown keys,
in the file or the environment, are errors.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError, DomainError
from .model import CostFn, ModelParams
from .simulate import SimConfig

ENV_PREFIX = "FINFUEL_"

DEFAULT_TOLERANCES = {
    "root": 1e-12,  # beta*/gamma* bisection
    "boundary_nodes": 201,
    "boundary_eps": 1e-3,
    "quad_rel": 1e-13,
    "f_integral_rel": 1e-9,
    "residual": 1e-4,  # HJB residual, relative to scale
    "oracle": 1e-9,
    "oracle_max_sweeps": 200,
    "oracle_rel_error": 0.02,
    "skorokhod": 1e-8,
    "n_se": 3.0,
    "a_coeff_rel": 1e-8,
}

DEFAULT_GRID = {"n_x": 401, "n_c": 101, "x_min": None, "x_max": None}

_SCHEMA = {
    "model": {"lambda", "theta", "mu", "sigma"},
    "cost": {"family", "kappa"},
    "sim": {f.name for f in fields(SimConfig)},
    "grid": set(DEFAULT_GRID),
    "output_dir": None,
    "tolerances": set(DEFAULT_TOLERANCES),
}


@dataclass
class RunConfig:
    model: ModelParams
    cost: CostFn
    sim: SimConfig = field(default_factory=SimConfig)
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    output_dir: str = "out"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    raw: dict = field(default_factory=dict, repr=False)

    def echo(self) -> dict:
        """Fully resolved configuration, suitable for re-running."""
        return {
            "model": self.model.to_dict(),
            "cost": self.cost.to_dict(),
            "sim": self.sim.to_dict(),
            "grid": dict(self.grid),
            "output_dir": self.output_dir,
            "tolerances": dict(self.tolerances),
        }


def _check_keys(tree: dict) -> None:
    if not isinstance(tree, dict):
        raise ConfigError("configuration root must be an object")
    for key, val in tree.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")
        allowed = _SCHEMA[key]
        if allowed is None:
            continue
        if not isinstance(val, dict):
            raise ConfigError(f"'{key}' must be an object")
        for sub in val:
            if sub not in allowed:
                raise ConfigError(f"unknown config key '{key}.{sub}'")
    for req in ("model", "cost"):
        if req not in tree:
            raise ConfigError(f"missing required section '{req}'")


def _parse_env_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_env(tree: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    tree = copy.deepcopy(tree)
    for name, text in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX) :].lower().split("__")
        if len(path) == 1:
            (top,) = path
            if top not in _SCHEMA or _SCHEMA[top] is not None:
                raise ConfigError(f"environment variable {name} does not name a config key")
            tree[top] = _parse_env_value(text)
        elif len(path) == 2:
            top, sub = path
            if top not in _SCHEMA or _SCHEMA[top] is None or sub not in _SCHEMA[top]:
                raise ConfigError(f"environment variable {name} does not name a config key")
            tree.setdefault(top, {})[sub] = _parse_env_value(text)
        else:
            raise ConfigError(f"environment variable {name} nests too deeply")
    return tree


def from_dict(tree: dict) -> RunConfig:
    _check_keys(tree)
    m = tree["model"]
    try:
        model = ModelParams(float(m["lambda"]), float(m["theta"]), float(m["mu"]), float(m["sigma"]))
    except KeyError as exc:
        raise ConfigError(f"missing key 'model.{exc.args[0]}'") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    try:
        cost = CostFn.from_spec(tree["cost"])
        cost.check()
    except KeyError as exc:
        raise ConfigError(f"missing key 'cost.{exc.args[0]}'") from None
    except DomainError as exc:
        raise ConfigError(f"cost: {exc}") from None
    try:
        sim = SimConfig(**tree.get("sim", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sim: {exc}") from None
    grid = dict(DEFAULT_GRID)
    grid.update(tree.get("grid", {}))
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tree.get("tolerances", {}))
    return RunConfig(model, cost, sim, grid, str(tree.get("output_dir", "out")), tol, tree)


def load(path, environ=None) -> RunConfig:
    try:
        with open(path) as fh:
            tree = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return from_dict(apply_env(tree, environ))
