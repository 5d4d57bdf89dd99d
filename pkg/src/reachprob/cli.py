"""Command-line front end: ``reachprob solve | slice | simulate | validate``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_OUTPUT = 3


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reachprob",
                                description="Probabilistic reach-avoid sets on Cartesian grids.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="compute V_T .. V_0 and write them with a manifest")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=["fixed", "optimal"],
                   help="default: optimal when the config policy is 'optimal', else fixed")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int, help="worker threads (default: all cores)")

    s = sub.add_parser("slice", help="export a 2-D slice of a value field as CSV")
    s.add_argument("--field", required=True)
    s.add_argument("--fix", action="append", default=[], metavar="AXIS=VALUE")
    s.add_argument("--out", help="CSV path (default: standard output)")

    s = sub.add_parser("simulate", help="roll out a policy from one initial state")
    s.add_argument("--config", required=True)
    s.add_argument("--policy", help="heading | optimal | constant:<value> (default: config policy)")
    s.add_argument("--values")
    s.add_argument("--init", required=True, metavar="X,Y,THETA",
                   help="initial state; write --init=-1,0,0 when the first value is negative")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)

    s = sub.add_parser("validate", help="compare V_0 with rollout frequencies on a slice")
    s.add_argument("--config", required=True)
    s.add_argument("--values", required=True)
    s.add_argument("--gamma", type=float)
    s.add_argument("--slice", action="append", default=[], metavar="AXIS=VALUE",
                   help="fixed coordinates (default: theta=0 on 3-axis grids)")
    s.add_argument("--points-per-axis", type=int, default=15)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--band", type=float, default=0.05)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int)
    return p


def _pairs(items, flag):
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise _Fail(EXIT_USAGE, f"{flag} expects AXIS=VALUE, got {item!r}")
        name = name.strip()
        if name in out:
            raise _Fail(EXIT_USAGE, f"{flag}: axis {name!r} given twice")
        try:
            out[name] = float(value)
        except ValueError:
            raise _Fail(EXIT_USAGE, f"{flag} {item!r}: {value!r} is not a number") from None
    return out


def _load_config(path):
    from .config import Config
    from .errors import ConfigError

    try:
        return Config.load(path)
    except ConfigError as exc:
        raise _Fail(EXIT_USAGE, f"invalid config: {exc}") from None


def _config_call(fn, *args, **kw):
    from .errors import ConfigError

    try:
        return fn(*args, **kw)
    except ConfigError as exc:
        raise _Fail(EXIT_USAGE, f"invalid config: {exc}") from None


def _load_store(directory):
    from .errors import FormatError
    from .solver import ValueStore

    try:
        return ValueStore.load(directory)
    except (FormatError, OSError, ValueError) as exc:
        raise _Fail(EXIT_USAGE, f"cannot load value store {directory}: {exc}") from None


def _store_estimator(store):
    from .solver import ExpectationEstimator

    e = store.meta.get("estimator", {})
    return ExpectationEstimator(e.get("mode", "monte_carlo"), int(e.get("m", 1)),
                                int(e.get("seed", 0)), bool(e.get("common_random_numbers", True)))


# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    from .config import build_estimator, build_policy, build_scenario
    from .solver import FIXED, OPTIMAL, solve_fixed, solve_optimal

    cfg = _load_config(args.config)
    mode = args.mode or (OPTIMAL if cfg.policy == "optimal" else FIXED)
    if mode == FIXED and cfg.policy == "optimal":
        raise _Fail(EXIT_USAGE, "invalid config: policy 'optimal' cannot drive a fixed-policy solve")
    seed = _config_call(cfg.effective_seed, args.seed)
    scenario = _config_call(build_scenario, cfg)
    est = build_estimator(cfg, seed)
    policy = _config_call(build_policy, cfg, scenario) if mode == FIXED else None

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise _Fail(EXIT_OUTPUT, f"cannot write to {out}: {exc.strerror or exc}") from None

    def progress(fld, dt):
        v = fld.values
        print(f"k={fld.time_index:4d}  {dt:9.3f}s  min={v.min():.6f}  max={v.max():.6f}", flush=True)

    t0 = time.perf_counter()
    if mode == FIXED:
        store = solve_fixed(scenario, policy, est, progress)
    else:
        store = solve_optimal(scenario, est, progress)
    store.fingerprint = cfg.fingerprint(mode, seed)
    store.meta = {
        "gamma": cfg.gamma,
        "axes": cfg.axis_names(),
        "scenario": cfg.scenario_name,
        "policy": cfg.policy if mode == FIXED else "optimal",
        "estimator": {"mode": est.mode, "m": est.m, "seed": est.seed,
                      "common_random_numbers": est.common_random_numbers},
    }
    try:
        store.save(out)
    except OSError as exc:
        raise _Fail(EXIT_OUTPUT, f"cannot write to {out}: {exc.strerror or exc}") from None
    print(f"wrote {store.horizon + 1} fields to {out} in {time.perf_counter() - t0:.2f}s")
    return EXIT_OK


def _axis_names_for(field_path, ndim):
    manifest = Path(field_path).parent / "manifest.json"
    try:
        names = json.loads(manifest.read_text()).get("axes")
        if isinstance(names, list) and len(names) == ndim:
            return [str(n) for n in names]
    except (OSError, json.JSONDecodeError):
        pass
    if ndim == 3:
        return ["x", "y", "theta"]
    return [f"s{d}" for d in range(ndim)]


def cmd_slice(args) -> int:
    from .errors import FormatError
    from .grid import AxisSpec, GridSpec, ValueField, read_field
    from .reachset import slice_field

    try:
        fld = read_field(args.field)
    except (OSError, FormatError) as exc:
        raise _Fail(EXIT_USAGE, f"cannot read field {args.field}: {exc}") from None
    names = _axis_names_for(args.field, fld.spec.ndim)
    spec = GridSpec(AxisSpec(a.lower, a.upper, a.count, a.periodic, n) for a, n in zip(fld.spec.axes, names))
    fld = ValueField(spec, fld.time_index, fld.values, check=False)
    fixed = _pairs(args.fix, "--fix")
    try:
        sl = slice_field(fld, fixed)
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from None
    text = sl.to_csv()
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise _Fail(EXIT_OUTPUT, f"cannot write {args.out}: {exc.strerror or exc}") from None
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _policy_for(cfg, scenario, name, values):
    store = est = None
    if values:
        store = _load_store(values)
        est = _store_estimator(store)
    if name == "optimal":
        if store is None:
            raise _Fail(EXIT_USAGE, "--values is required for the optimal policy")
        if store.mode != "optimal":
            raise _Fail(EXIT_USAGE, f"{values} holds a {store.mode}-policy solve, not an optimal one")
        if store.spec != scenario.grid or store.horizon != scenario.horizon:
            raise _Fail(EXIT_USAGE, f"{values} was solved on a different grid or horizon")
    from .config import build_policy

    return _config_call(build_policy, cfg, scenario, name, store, est), store


def cmd_simulate(args) -> int:
    import numpy as np

    from .config import build_scenario
    from .grid import interpolate
    from .simulate import simulate_outcomes

    cfg = _load_config(args.config)
    scenario = _config_call(build_scenario, cfg)
    name = args.policy or cfg.policy
    try:
        s0 = np.array([float(c) for c in args.init.split(",")])
    except ValueError:
        raise _Fail(EXIT_USAGE, f"--init expects comma-separated numbers, got {args.init!r}") from None
    if len(s0) != scenario.grid.ndim:
        raise _Fail(EXIT_USAGE, f"--init needs {scenario.grid.ndim} coordinates, got {len(s0)}")
    if args.n < 1:
        raise _Fail(EXIT_USAGE, "--n must be >= 1")
    policy, store = _policy_for(cfg, scenario, name, args.values)
    seed = _config_call(cfg.effective_seed, args.seed)
    out, _ = simulate_outcomes(scenario, policy, s0[None, :], args.n, seed)
    wins = int((out == 1).sum())
    print(f"successes={wins}")
    print(f"rollouts={args.n}")
    print(f"empirical_probability={wins / args.n:.6f}")
    if store is not None:
        print(f"predicted_V0={interpolate(store.field(0), s0):.6f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .config import build_scenario
    from .simulate import slice_test_points, validate

    cfg = _load_config(args.config)
    store = _load_store(args.values)
    est = _store_estimator(store)
    if store.fingerprint != cfg.fingerprint(store.mode, est.seed):
        raise _Fail(EXIT_USAGE, f"value store {args.values} was solved from a different scenario "
                                f"(fingerprint mismatch); re-run solve")
    scenario = _config_call(build_scenario, cfg)
    name = "optimal" if store.mode == "optimal" else cfg.policy
    policy, _ = _policy_for(cfg, scenario, name, args.values)
    gamma = cfg.gamma if args.gamma is None else args.gamma
    if not 0.0 <= gamma <= 1.0:
        raise _Fail(EXIT_USAGE, f"--gamma must lie in [0, 1], got {gamma}")
    fixed = _pairs(args.slice, "--slice")
    if not fixed and scenario.grid.ndim == 3:
        fixed = {cfg.axis_names()[2]: 0.0}
    try:
        pts = slice_test_points(scenario.grid, args.points_per_axis, fixed)
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from None
    seed = _config_call(cfg.effective_seed, args.seed)
    meta = {
        "policy": name,
        "point_selection": f"cell centres of a {args.points_per_axis}x{args.points_per_axis} partition of "
                           + ",".join(f"{k}={v:g}" for k, v in fixed.items()),
    }
    report = validate(scenario, store, policy, pts, args.n, gamma, seed, args.band, meta)
    try:
        report.write_csv(args.out)
    except OSError as exc:
        raise _Fail(EXIT_OUTPUT, f"cannot write {args.out}: {exc.strerror or exc}") from None
    for line in report.summary_lines():
        print(line)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "slice": cmd_slice, "simulate": cmd_simulate, "validate": cmd_validate}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads is not None:
        if threads < 1:
            print("reachprob: error: --threads must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        if "numba" in sys.modules:
            import numba

            try:
                numba.set_num_threads(threads)
            except ValueError as exc:
                print(f"reachprob: error: --threads: {exc}", file=sys.stderr)
                return EXIT_USAGE
        else:
            os.environ["NUMBA_NUM_THREADS"] = str(threads)
    try:
        return COMMANDS[args.command](args)
    except _Fail as exc:
        print(f"reachprob: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
