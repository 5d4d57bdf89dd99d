"""Backward recursion for reach-avoid value functions.

``V_T = min(1_A, 1_not_B)`` and, going backward,

    V_{k-1}(s) = min(1_not_B(s), max(1_A(s), E[V_k(s')]))

where the expectation is taken under the fixed policy's control, or
maximized over the finite control set for the optimal value.  Grid points in
``B_{k-1}`` or ``A_{k-1}`` are set to 0 or 1 directly; the expectation is only
evaluated elsewhere.

Expectations are Monte Carlo means of interpolated values (``m`` draws per
point and control) or exact sums over a finite-support kernel.  The draws at
grid point ``i`` for decision step ``k`` come from the stream
``derive_key(seed, k, i, slot)``; ``slot`` is the control index, or
``SHARED_SLOT`` when all controls share one stream (common random numbers,
and always for fixed policies).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import FormatError
from .grid import ValueField, read_field, write_field
from .model import Policy, Scenario
from .rng import state_word

log = logging.getLogger(__name__)

FIXED = "fixed"
OPTIMAL = "optimal"


@dataclass(frozen=True)
class ExpectationEstimator:
    mode: str = "monte_carlo"
    m: int = 1000
    seed: int = 0
    common_random_numbers: bool = True

    def __post_init__(self):
        if self.mode not in ("monte_carlo", "exact"):
            raise ValueError(f"unknown estimator mode {self.mode!r}")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @classmethod
    def monte_carlo(cls, m: int, seed: int = 0, common_random_numbers: bool = True):
        return cls("monte_carlo", int(m), int(seed), bool(common_random_numbers))

    @classmethod
    def exact(cls):
        return cls("exact", 1, 0, True)

    @property
    def is_exact(self) -> bool:
        return self.mode == "exact"


class ValueStore:
    """``V_T, ..., V_0`` on one grid, plus the metadata needed to reload them."""

    def __init__(self, fields, mode: str, fingerprint: str = "", meta: dict | None = None):
        fields = sorted(fields, key=lambda f: -f.time_index)
        if not fields:
            raise ValueError("a value store needs at least one field")
        T = fields[0].time_index
        if [f.time_index for f in fields] != list(range(T, -1, -1)):
            raise ValueError("fields must cover time indices T, T-1, ..., 0 exactly once")
        spec = fields[0].spec
        if any(f.spec != spec for f in fields):
            raise ValueError("all fields must share one grid")
        if mode not in (FIXED, OPTIMAL):
            raise ValueError(f"mode must be {FIXED!r} or {OPTIMAL!r}")
        self.fields = fields
        self.mode = mode
        self.fingerprint = fingerprint
        self.meta = dict(meta or {})

    @property
    def horizon(self) -> int:
        return self.fields[0].time_index

    @property
    def spec(self):
        return self.fields[0].spec

    def field(self, k: int) -> ValueField:
        if not 0 <= k <= self.horizon:
            raise IndexError(f"time index {k} outside [0, {self.horizon}]")
        return self.fields[self.horizon - k]

    def stacked(self) -> np.ndarray:
        """``(T + 1, size)`` array with row ``k`` holding ``V_k``."""
        return np.stack([self.field(k).values for k in range(self.horizon + 1)])

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files = []
        for f in self.fields:
            name = f"V_{f.time_index:04d}.vfld"
            write_field(f, d / name)
            files.append(name)
        manifest = {
            "fingerprint": self.fingerprint,
            "mode": self.mode,
            "T": self.horizon,
            "files": files,
            **self.meta,
        }
        path = d / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, directory) -> "ValueStore":
        d = Path(directory)
        try:
            manifest = json.loads((d / "manifest.json").read_text())
            files = manifest["files"]
            mode = manifest["mode"]
            fingerprint = manifest["fingerprint"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise FormatError(f"cannot read manifest in {d}: {exc}") from None
        fields = [read_field(d / name) for name in files]
        meta = {k: v for k, v in manifest.items() if k not in ("fingerprint", "mode", "T", "files")}
        store = cls(fields, mode, fingerprint, meta)
        if store.horizon != manifest.get("T", store.horizon):
            raise FormatError("manifest T disagrees with the stored fields")
        return store

    def __repr__(self):
        return f"ValueStore(mode={self.mode!r}, T={self.horizon}, {self.spec!r})"


# ---------------------------------------------------------------------------


def _case_masks(scenario: Scenario, k: int):
    pts = scenario.grid.points()
    in_b = np.asarray(scenario.obstacle.contains_many(pts, k), dtype=bool)
    in_a = np.asarray(scenario.target.contains_many(pts, k), dtype=bool) & ~in_b
    return in_a, in_b


def _twins(scenario: Scenario, idx: np.ndarray) -> np.ndarray:
    """Map upper-seam nodes of periodic axes onto their lower copies."""
    spec = scenario.grid
    if not spec.periodic.any():
        return idx
    multi = np.array(np.unravel_index(idx, spec.shape))
    for d, a in enumerate(spec.axes):
        if a.periodic:
            row = multi[d]
            row[row == a.count - 1] = 0
    return np.ravel_multi_index(tuple(multi), spec.shape).astype(np.int64)


def _eval_points(scenario: Scenario, idx: np.ndarray):
    twin = _twins(scenario, idx)
    return scenario.grid.points()[twin], twin.astype(np.uint64)


def terminal_field(scenario: Scenario) -> ValueField:
    in_a, _ = _case_masks(scenario, scenario.horizon)
    return ValueField(scenario.grid, scenario.horizon, in_a.astype(float), check=False)


def expectation(field: ValueField, kernel, s, u, est: ExpectationEstimator, stream=None) -> float:
    """Expected interpolated value of ``field`` one step after ``(s, u)``.

    In Monte Carlo mode ``stream`` supplies the draws (a :class:`~reachprob.rng.Stream`
    or a numpy generator).
    """
    kernel._check_mode(est)
    if not est.is_exact and stream is None:
        raise ValueError("Monte Carlo expectations need a random stream")
    return kernel.expect_one(field, np.asarray(s, dtype=float), u, est, stream)


def expectations_at(scenario: Scenario, field: ValueField, idx, est, policy: Policy | None = None):
    """Expectations at grid points ``idx`` for decision step ``field.time_index - 1``.

    With a policy, returns one value per point; without, the best value over
    the control set and its index.  These are the same numbers the backward
    step uses (same streams), whatever the case of the point.
    """
    idx = np.asarray(idx, dtype=np.int64)
    states, words = _eval_points(scenario, idx)
    k = field.time_index - 1
    kernel = scenario.kernel
    if policy is not None:
        controls = policy.evaluate_many(states, k)
        return kernel.expect_each(field, states, controls, est, k, words)
    return kernel.expect_max(field, states, scenario.controls.as_array(), est, k, words)


def _backstep(scenario, V_k, est, policy):
    k = V_k.time_index
    if k < 1:
        raise ValueError("backstep needs a field with time index >= 1")
    if V_k.spec != scenario.grid:
        raise ValueError("field grid differs from scenario grid")
    in_a, in_b = _case_masks(scenario, k - 1)
    out = np.zeros(scenario.grid.size)
    out[in_a] = 1.0
    idx = np.flatnonzero(~(in_a | in_b))
    if idx.size:
        e = expectations_at(scenario, V_k, idx, est, policy)
        out[idx] = e if policy is not None else e[0]
    return ValueField(scenario.grid, k - 1, out)


def backstep_fixed(scenario: Scenario, policy: Policy, V_k: ValueField, est) -> ValueField:
    return _backstep(scenario, V_k, est, policy)


def backstep_optimal(scenario: Scenario, V_k: ValueField, est) -> ValueField:
    return _backstep(scenario, V_k, est, None)


def literal_backup(scenario: Scenario, V_k: ValueField, idx, est, policy: Policy | None = None):
    """``min(1_not_B, max(1_A, E))`` evaluated literally at grid points ``idx``."""
    idx = np.asarray(idx, dtype=np.int64)
    k = V_k.time_index - 1
    pts = scenario.grid.points()[idx]
    o = 1.0 - scenario.obstacle.contains_many(pts, k).astype(float)
    a = scenario.target.contains_many(pts, k).astype(float)
    e = expectations_at(scenario, V_k, idx, est, policy)
    if policy is None:
        e = e[0]
    return np.minimum(o, np.maximum(a, e))


def _solve(scenario, est, policy, mode, progress):
    fld = terminal_field(scenario)
    fields = [fld]
    if progress:
        progress(fld, 0.0)
    for _ in range(scenario.horizon):
        t0 = time.perf_counter()
        fld = _backstep(scenario, fld, est, policy)
        dt = time.perf_counter() - t0
        log.info("k=%d %.2fs min=%.4f max=%.4f", fld.time_index, dt,
                 fld.values.min(), fld.values.max())
        if progress:
            progress(fld, dt)
        fields.append(fld)
    return ValueStore(fields, mode)


def solve_fixed(scenario: Scenario, policy: Policy, est: ExpectationEstimator,
                progress: Callable | None = None) -> ValueStore:
    return _solve(scenario, est, policy, FIXED, progress)


def solve_optimal(scenario: Scenario, est: ExpectationEstimator,
                  progress: Callable | None = None) -> ValueStore:
    return _solve(scenario, est, None, OPTIMAL, progress)


class OptimalPolicy(Policy):
    """Greedy control w.r.t. the stored optimal value functions.

    At ``(s, k)`` picks the control maximizing the expected ``V_{k+1}``; ties go
    to the lowest control index.  Off-grid states key their random stream by
    the bits of the state, so the policy is a deterministic map.  At ``k = T``
    no successor field exists and the first control is returned.
    """

    def __init__(self, store: ValueStore, scenario: Scenario, est: ExpectationEstimator):
        if store.mode != OPTIMAL:
            raise ValueError("optimal_policy needs a store solved in optimal mode")
        self.store = store
        self.scenario = scenario
        self.est = est
        self._controls = scenario.controls.as_array()

    def expectations(self, s, k: int) -> np.ndarray:
        self._check(k)
        s = np.asarray(s, dtype=float)
        return self.scenario.kernel.expect_table(
            self.store.field(k + 1), s[None, :], self._controls, self.est, k,
            np.array([state_word(s)], dtype=np.uint64))[0]

    def index(self, s, k: int) -> int:
        self._check(k)
        if k == self.store.horizon:
            return 0
        s = np.asarray(s, dtype=float)
        _, arg = self.scenario.kernel.expect_max(
            self.store.field(k + 1), s[None, :], self._controls, self.est, k,
            np.array([state_word(s)], dtype=np.uint64))
        return int(arg[0])

    def evaluate(self, s, k):
        return float(self._controls[self.index(s, k)])

    def _check(self, k):
        if k < 0 or k > self.store.horizon:
            raise ValueError(f"time index {k} outside [0, {self.store.horizon}]")


def optimal_policy(store: ValueStore, scenario: Scenario, est: ExpectationEstimator) -> OptimalPolicy:
    return OptimalPolicy(store, scenario, est)
