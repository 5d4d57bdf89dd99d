"""Probabilistic reach-avoid sets on Cartesian grids.

Submodules import numba on first use; attribute access on the package is lazy
so that ``reachprob.cli`` can set the thread count before that happens.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "AxisSpec": "grid", "GridSpec": "grid", "ValueField": "grid", "interpolate": "grid",
    "interpolate_many": "grid", "fill": "grid", "read_field": "grid", "write_field": "grid",
    "Scenario": "model", "ControlSet": "model", "Policy": "model", "ConstantPolicy": "model",
    "FunctionPolicy": "model", "SnappedPolicy": "model", "BoxSequence": "model",
    "MovingBox": "model", "FiniteSupportKernel": "model", "StochasticKernel": "model",
    "ExpectationEstimator": "solver", "ValueStore": "solver", "solve_fixed": "solver",
    "solve_optimal": "solver", "optimal_policy": "solver",
    "LevelQuery": "reachset", "member": "reachset", "classify_grid": "reachset",
    "slice_field": "reachset",
    "rollout": "simulate", "empirical_probability": "simulate", "validate": "simulate",
    "FiniteChain": "oracle", "exact_reach_avoid": "oracle", "exact_reach_avoid_max": "oracle",
    "VehicleParams": "vehicle", "VehicleKernel": "vehicle", "HeadingPolicy": "vehicle",
    "vehicle_scenario": "vehicle", "vehicle_grid": "vehicle",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    mod = _EXPORTS.get(name)
    if mod is None:
        raise AttributeError(f"module 'reachprob' has no attribute {name!r}")
    value = getattr(import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(__all__))
