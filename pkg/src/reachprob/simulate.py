"""Forward rollouts, empirical reach-avoid frequencies and validation reports.

Rollout ``j`` from start ``s0`` draws from the stream
``derive_key(seed, ROLLOUT_TAG, state_word(s0), j)``, so results do not depend
on how rollouts are batched or scheduled.  At each step the obstacle is
checked before the target, the same dominance the solver applies.

For the vehicle scenario with a heading, constant or optimal policy the
rollouts run in a compiled loop; any other combination goes through the
generic Python path.  Both consume the streams identically.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .grid import GridSpec, interpolate_many
from .model import BoxSequence, ConstantPolicy, Policy, Scenario
from .rng import ROLLOUT_TAG, Stream, derive_key, state_word
from .solver import OptimalPolicy, ValueStore

SUCCESS = "success"
OBSTACLE_HIT = "obstacle_hit"
HORIZON_EXHAUSTED = "horizon_exhausted"

_CODES = {1: SUCCESS, 0: OBSTACLE_HIT, -1: HORIZON_EXHAUSTED}


@dataclass(frozen=True)
class RolloutRecord:
    trajectory: np.ndarray  # (stop + 1, n): s_0 .. s_stop
    outcome: str
    stop_step: int

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS

    @property
    def success_step(self) -> int | None:
        return self.stop_step if self.outcome == SUCCESS else None

    @property
    def obstacle_step(self) -> int | None:
        return self.stop_step if self.outcome == OBSTACLE_HIT else None


def classify_trajectory(trajectory, target, obstacle, horizon: int) -> tuple[str, int]:
    """Outcome and stopping step of a stored trajectory.

    Scans ``k = 0, 1, ...``; the first step in the obstacle ends in failure,
    the first step in the target (and not the obstacle) in success.
    """
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    for k in range(min(len(traj), horizon + 1)):
        if obstacle.contains(traj[k], k):
            return OBSTACLE_HIT, k
        if target.contains(traj[k], k):
            return SUCCESS, k
    return HORIZON_EXHAUSTED, min(len(traj), horizon + 1) - 1


def rollout_stream(seed: int, s0, j: int) -> Stream:
    return Stream(derive_key(seed, ROLLOUT_TAG, state_word(np.asarray(s0, dtype=float)), j))


def rollout(scenario: Scenario, policy: Policy, s0, rng) -> RolloutRecord:
    """One trajectory from ``s0``; ``rng`` supplies the kernel draws."""
    s = np.array(s0, dtype=float)
    traj = [s.copy()]
    T = scenario.horizon
    for k in range(T + 1):
        if scenario.obstacle.contains(s, k):
            return RolloutRecord(np.array(traj), OBSTACLE_HIT, k)
        if scenario.target.contains(s, k):
            return RolloutRecord(np.array(traj), SUCCESS, k)
        if k == T:
            break
        u = policy(s, k)
        s = np.asarray(scenario.kernel.sample_one(s, u, rng), dtype=float)
        traj.append(s.copy())
    return RolloutRecord(np.array(traj), HORIZON_EXHAUSTED, T)


# ---------------------------------------------------------------------------
# batched rollouts


def _fast_args(scenario: Scenario, policy: Policy):
    from . import vehicle

    kern = scenario.kernel
    if not isinstance(kern, vehicle.VehicleKernel):
        return None
    if not (isinstance(scenario.target, BoxSequence) and isinstance(scenario.obstacle, BoxSequence)):
        return None
    T = scenario.horizon
    a_lo, a_hi = scenario.target.bounds_table(T)
    b_lo, b_hi = scenario.obstacle.bounds_table(T)
    p = kern.params
    none = np.zeros((1, 1))
    spec = scenario.grid
    packed = spec.packed()
    controls = np.zeros(1)
    e_seed, crn, e_mode, m = 0, True, vehicle.MC, 1
    const_u, wrap, u_min, u_max = 0.0, True, p.u_min, p.u_max
    fields = none
    if isinstance(policy, vehicle.HeadingPolicy):
        kind = 0
        wrap = policy.wrap
        u_min, u_max = policy.params.u_min, policy.params.u_max
    elif isinstance(policy, ConstantPolicy):
        kind = 1
        const_u = policy.u
    elif isinstance(policy, OptimalPolicy) and policy.scenario.kernel is kern:
        kind = 2
        if policy.store.spec.ndim != 3 or policy.store.horizon != T:
            return None
        packed = policy.store.spec.packed()
        fields = policy.store.stacked()
        controls = policy.scenario.controls.as_array()
        est = policy.est
        e_seed, crn, m = est.seed, est.common_random_numbers, est.m
        e_mode = vehicle.EXACT if est.is_exact else vehicle.MC
    else:
        return None
    return dict(
        horizon=T, a_lo=a_lo, a_hi=a_hi, b_lo=b_lo, b_hi=b_hi, kind=kind, const_u=float(const_u),
        wrap=bool(wrap), u_min=float(u_min), u_max=float(u_max), fields=fields, packed=packed,
        controls=controls, e_seed=np.uint64(e_seed), crn=bool(crn), e_mode=e_mode, m=int(m),
        v=p.v, dt=p.dt, ns=int(p.substeps), dist=kern._dist, r=p.r, ring=kern._ring, probs=kern._probs,
    )


def simulate_outcomes(scenario: Scenario, policy: Policy, starts, n_rollouts: int, seed: int,
                      keep_paths: bool = False):
    """Outcome codes ``(P, n)``: 1 success, 0 obstacle, -1 horizon; plus stop steps.

    With ``keep_paths`` also returns ``(P, n, T + 1, dim)`` trajectories padded
    with NaN after the stop step.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    starts = np.ascontiguousarray(np.atleast_2d(np.asarray(starts, dtype=float)))
    P = len(starts)
    words = np.array([state_word(s) for s in starts], dtype=np.uint64)
    fa = _fast_args(scenario, policy)
    if fa is not None and starts.shape[1] == 3:
        from .vehicle import _rollouts

        out, stop, paths = _rollouts(
            starts, int(n_rollouts), np.uint64(int(seed) & (2**64 - 1)), words, fa["horizon"],
            fa["a_lo"], fa["a_hi"], fa["b_lo"], fa["b_hi"], fa["kind"], fa["const_u"],
            fa["wrap"], fa["u_min"], fa["u_max"], fa["fields"], *fa["packed"], fa["controls"],
            fa["e_seed"], fa["crn"], fa["e_mode"], fa["m"], fa["v"], fa["dt"], fa["ns"], fa["dist"], fa["r"],
            fa["ring"], fa["probs"], bool(keep_paths),
        )
        res = (out.reshape(P, n_rollouts), stop.reshape(P, n_rollouts))
        if keep_paths:
            res += (paths.reshape(P, n_rollouts, fa["horizon"] + 1, 3),)
        return res
    T = scenario.horizon
    out = np.empty((P, n_rollouts), dtype=np.int8)
    stop = np.empty((P, n_rollouts), dtype=np.int64)
    paths = np.full((P, n_rollouts, T + 1, starts.shape[1]), np.nan) if keep_paths else None
    inv = {v: k for k, v in _CODES.items()}
    for i in range(P):
        for j in range(n_rollouts):
            rec = rollout(scenario, policy, starts[i], rollout_stream(seed, starts[i], j))
            out[i, j] = inv[rec.outcome]
            stop[i, j] = rec.stop_step
            if keep_paths:
                paths[i, j, : len(rec.trajectory)] = rec.trajectory
    return (out, stop, paths) if keep_paths else (out, stop)


def empirical_probabilities(scenario: Scenario, policy: Policy, starts, n_rollouts: int,
                            seed: int) -> np.ndarray:
    out = simulate_outcomes(scenario, policy, starts, n_rollouts, seed)[0]
    return (out == 1).sum(axis=1) / n_rollouts


def empirical_probability(scenario: Scenario, policy: Policy, s0, n_rollouts: int, seed: int) -> float:
    """Fraction of ``n_rollouts`` rollouts from ``s0`` that succeed."""
    return float(empirical_probabilities(scenario, policy, [s0], n_rollouts, seed)[0])


# ---------------------------------------------------------------------------
# validation


def slice_test_points(spec: GridSpec, per_axis: int, fixed: Mapping[str, float]) -> np.ndarray:
    """Cell centres of a ``per_axis`` x ``per_axis`` partition of the free-axis plane.

    Centres avoid the domain edges and never sit on solver grid planes unless
    the counts line up, so the test exercises interpolation.
    """
    if per_axis < 1:
        raise ValueError("per_axis must be >= 1")
    names = spec.names
    pos = {}
    for name, v in fixed.items():
        if name not in names:
            raise ValueError(f"unknown axis {name!r}; grid axes are {names}")
        pos[names.index(name)] = float(v)
    free = [d for d in range(spec.ndim) if d not in pos]
    if len(free) != 2:
        raise ValueError(f"test points need exactly two free axes, got {len(free)}")
    a, b = free
    ca = [spec.lowers[a] + (i + 0.5) * (spec.uppers[a] - spec.lowers[a]) / per_axis for i in range(per_axis)]
    cb = [spec.lowers[b] + (i + 0.5) * (spec.uppers[b] - spec.lowers[b]) / per_axis for i in range(per_axis)]
    pts = np.empty((per_axis * per_axis, spec.ndim))
    for d, v in pos.items():
        pts[:, d] = v
    ga, gb = np.meshgrid(ca, cb, indexing="ij")
    pts[:, a] = ga.ravel()
    pts[:, b] = gb.ravel()
    return pts


@dataclass
class ValidationReport:
    axis_names: tuple[str, ...]
    points: np.ndarray
    predicted: np.ndarray
    empirical: np.ndarray
    gamma: float
    band: float
    n_rollouts: int
    meta: dict = field(default_factory=dict)

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.predicted - self.empirical)

    @property
    def predicted_member(self) -> np.ndarray:
        return self.predicted >= self.gamma

    @property
    def empirical_member(self) -> np.ndarray:
        return self.empirical >= self.gamma

    @property
    def scored(self) -> np.ndarray:
        """Points outside the boundary band, which count toward agreement."""
        return np.abs(self.predicted - self.gamma) >= self.band

    @property
    def mean_abs_gap(self) -> float:
        return float(self.gap.mean())

    @property
    def agreement_rate(self) -> float:
        mask = self.scored
        if not mask.any():
            return math.nan
        return float((self.predicted_member == self.empirical_member)[mask].mean())

    def binomial_consistency(self, slack: float = 0.0) -> float:
        """Share of points with ``|gap| <= 3 sqrt(V (1 - V) / n) + slack``."""
        v = self.predicted
        bound = 3.0 * np.sqrt(np.clip(v * (1 - v), 0, None) / self.n_rollouts) + slack
        return float((self.gap <= bound).mean())

    def summary(self) -> dict:
        return {
            "points": len(self.points),
            "rollouts_per_point": self.n_rollouts,
            "gamma": self.gamma,
            "band": self.band,
            "scored_points": int(self.scored.sum()),
            "mean_abs_gap": self.mean_abs_gap,
            "max_abs_gap": float(self.gap.max()),
            "agreement_rate": self.agreement_rate,
            **self.meta,
        }

    def summary_lines(self) -> list[str]:
        return [f"{k}={v}" for k, v in self.summary().items()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        header = list(self.axis_names) + ["predicted", "empirical", "gap", "predicted_member", "empirical_member"]
        buf.write(",".join(header) + "\n")
        pm = self.predicted_member
        em = self.empirical_member
        gap = self.gap
        for i in range(len(self.points)):
            coords = [f"{c:.17g}" for c in self.points[i]]
            row = coords + [f"{self.predicted[i]:.17g}", f"{self.empirical[i]:.17g}", f"{gap[i]:.17g}",
                            str(int(pm[i])), str(int(em[i]))]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def validate(scenario: Scenario, store: ValueStore, policy: Policy, points: Sequence, n_rollouts: int,
             gamma: float, seed: int, band: float = 0.05, meta: dict | None = None) -> ValidationReport:
    """Compare interpolated ``V_0`` with rollout frequencies at ``points``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if band < 0:
        raise ValueError("band must be >= 0")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    spec = store.spec
    outside = (pts < spec.lowers - 1e-12) | (pts > spec.uppers + 1e-12)
    if outside[:, ~spec.periodic].any():
        raise ValueError("validation points must lie inside the grid domain")
    predicted = interpolate_many(store.field(0), pts)
    empirical = empirical_probabilities(scenario, policy, pts, n_rollouts, seed)
    names = tuple(n or m or f"s{d}" for d, (n, m) in enumerate(zip(scenario.grid.names, spec.names)))
    info = {"seed": int(seed)}
    info.update(meta or {})
    return ValidationReport(names, pts, predicted, empirical, float(gamma), float(band), int(n_rollouts), info)
