"""JSON scenario configuration: schema validation, construction and fingerprints."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError

SEED_ENV = "REACHPROB_SEED"
_DEFAULT_NAMES_3D = ("x", "y", "theta")


def schema() -> dict:
    return json.loads(resources.files("reachprob").joinpath("config.schema.json").read_text())


def _where(err) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return path.lstrip(".") or "<root>"


def validate_dict(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"{_where(err)}: {err.message}")


@dataclass
class Config:
    raw: dict
    source: str = "<dict>"

    @classmethod
    def from_dict(cls, raw: dict, source: str = "<dict>") -> "Config":
        validate_dict(raw)
        cfg = cls(copy.deepcopy(raw), source)
        cfg._cross_checks()
        return cfg

    @classmethod
    def load(cls, path) -> "Config":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, str(path))

    # -- accessors ----------------------------------------------------------

    @property
    def scenario_name(self) -> str:
        return self.raw["scenario"]["name"]

    @property
    def params(self) -> dict:
        return self.raw["scenario"].get("params", {})

    @property
    def horizon(self) -> int:
        return self.raw["horizon"]

    @property
    def gamma(self) -> float:
        return float(self.raw["gamma"])

    @property
    def policy(self) -> str:
        return self.raw["policy"]

    def axis_names(self) -> list[str]:
        axes = self.raw["grid"]
        names = [a.get("name") for a in axes]
        if all(names):
            return names
        if len(axes) == 3:
            return list(_DEFAULT_NAMES_3D)
        return [f"s{d}" for d in range(len(axes))]

    def effective_seed(self, override: int | None = None) -> int:
        """``override`` if given, else ``$REACHPROB_SEED`` if set, else the config seed."""
        if override is not None:
            return int(override)
        env = os.environ.get(SEED_ENV)
        if env not in (None, ""):
            try:
                return int(env, 0)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
        return int(self.raw["seed"])

    # -- checks -------------------------------------------------------------

    def _cross_checks(self):
        raw = self.raw
        for d, a in enumerate(raw["grid"]):
            if not a["lower"] < a["upper"]:
                raise ConfigError(f"grid[{d}]: lower must be < upper")
        names = self.axis_names()
        if len(set(names)) != len(names):
            raise ConfigError("grid: axis names must be distinct")
        c = raw["controls"]
        if isinstance(c, dict):
            if c["count"] > 1 and not c["lower"] < c["upper"]:
                raise ConfigError("controls: lower must be < upper")
        pol = raw["policy"]
        if pol.startswith("constant:") and not math.isfinite(float(pol.split(":", 1)[1])):
            raise ConfigError("policy: constant value must be finite")
        if self.scenario_name == "vehicle":
            self._check_vehicle()
        else:
            self._check_chain()

    def _check_vehicle(self):
        raw = self.raw
        p = self.params
        if len(raw["grid"]) != 3:
            raise ConfigError(f"grid: the vehicle scenario needs 3 axes, got {len(raw['grid'])}")
        if p.get("u_min", -1.0) >= p.get("u_max", 1.0):
            raise ConfigError("scenario.params: u_min must be < u_max")
        if raw["estimator"] == "exact" and p.get("disturbance", "disk") != "ring8":
            raise ConfigError("estimator: exact expectations need scenario.params.disturbance = 'ring8'")

    def _check_chain(self):
        raw = self.raw
        p = self.params
        n = len(p["states"])
        dim = len(raw["grid"])
        if raw["policy"] == "heading":
            raise ConfigError("policy: 'heading' is only defined for the vehicle scenario")
        for i, s in enumerate(p["states"]):
            if len(s) != dim:
                raise ConfigError(f"scenario.params.states[{i}]: expected {dim} coordinates")
        if len(p["transitions"]) != n:
            raise ConfigError(f"scenario.params.transitions: expected {n} rows, one per state")
        for key in ("target", "obstacle"):
            spec = p[key]
            lists = spec["by_step"] if isinstance(spec, dict) else [spec]
            if isinstance(spec, dict) and len(lists) != raw["horizon"] + 1:
                raise ConfigError(f"scenario.params.{key}.by_step: expected horizon + 1 = {raw['horizon'] + 1} lists")
            for lst in lists:
                for i in lst:
                    if i >= n:
                        raise ConfigError(f"scenario.params.{key}: state index {i} out of range")

    # -- fingerprint ----------------------------------------------------------

    def fingerprint(self, mode: str, seed: int) -> str:
        """Hash of everything that affects solved values.

        ``gamma`` only thresholds results and is left out; so is ``policy`` for
        optimal solves.  ``seed`` is the effective solve seed.
        """
        body = copy.deepcopy(self.raw)
        body.pop("gamma", None)
        body["seed"] = int(seed)
        body["mode"] = mode
        if mode == "optimal":
            body.pop("policy", None)
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# construction


def build_grid(cfg: Config):
    from .grid import AxisSpec, GridSpec

    names = cfg.axis_names()
    return GridSpec(
        AxisSpec(a["lower"], a["upper"], a["count"], a.get("periodic", False), names[d])
        for d, a in enumerate(cfg.raw["grid"])
    )


def build_controls(cfg: Config):
    from .model import ControlSet

    c = cfg.raw["controls"]
    if isinstance(c, dict):
        return ControlSet.linspace(c["lower"], c["upper"], c["count"])
    return ControlSet(c)


def _index_set(states, spec):
    from .oracle import StateIndexSet

    if isinstance(spec, dict):
        steps = [frozenset(s) for s in spec["by_step"]]
        return StateIndexSet(states, lambda k: steps[k])
    return StateIndexSet(states, spec)


def build_chain(cfg: Config):
    from .oracle import FiniteChain

    p = cfg.params
    states = p["states"]
    trans = [[[(int(j), float(w)) for j, w in row] for row in per_state] for per_state in p["transitions"]]
    try:
        return FiniteChain(
            states=states,
            controls=build_controls(cfg),
            transitions=trans,
            target=_index_set(states, p["target"]),
            obstacle=_index_set(states, p["obstacle"]),
            horizon=cfg.horizon,
        )
    except ValueError as exc:
        raise ConfigError(f"scenario.params: {exc}") from None


def vehicle_params(cfg: Config):
    from .vehicle import VehicleParams

    p = cfg.params
    keys = ("v", "dt", "r", "u_min", "u_max")
    kw = {k: float(p[k]) for k in keys if k in p}
    if "substeps" in p:
        kw["substeps"] = int(p["substeps"])
    try:
        return VehicleParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"scenario.params: {exc}") from None


def build_scenario(cfg: Config):
    from .model import Scenario

    grid = build_grid(cfg)
    controls = build_controls(cfg)
    try:
        if cfg.scenario_name == "vehicle":
            from .vehicle import VehicleKernel, moving_square_sets

            target, obstacle = moving_square_sets()
            kernel = VehicleKernel(vehicle_params(cfg), cfg.params.get("disturbance", "disk"))
            return Scenario(kernel, target, obstacle, controls, cfg.horizon, cfg.gamma,
                            cfg.raw["samples"], grid)
        from .oracle import chain_scenario

        return chain_scenario(build_chain(cfg), grid, cfg.gamma, cfg.raw["samples"])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def build_estimator(cfg: Config, seed: int):
    from .solver import ExpectationEstimator

    if cfg.raw["estimator"] == "exact":
        return ExpectationEstimator("exact", 1, int(seed), True)
    return ExpectationEstimator.monte_carlo(cfg.raw["samples"], seed, cfg.raw["common_random_numbers"])


def build_policy(cfg: Config, scenario, name: str | None = None, store=None, est=None):
    """Policy named ``name`` (default: the config's policy)."""
    from .model import ConstantPolicy

    name = name or cfg.policy
    if name == "heading":
        if cfg.scenario_name != "vehicle":
            raise ConfigError("policy: 'heading' is only defined for the vehicle scenario")
        from .vehicle import HeadingPolicy

        return HeadingPolicy(vehicle_params(cfg), cfg.params.get("heading_wrap", True))
    if name.startswith("constant:"):
        u = float(name.split(":", 1)[1])
        if cfg.scenario_name == "chain" and u not in scenario.controls:
            raise ConfigError(f"policy: constant {u} is not one of the chain's controls")
        return ConstantPolicy(u)
    if name == "optimal":
        if store is None:
            raise ConfigError("policy 'optimal' needs a solved value store")
        from .solver import optimal_policy

        return optimal_policy(store, scenario, est)
    raise ConfigError(f"policy: unknown policy {name!r}")
