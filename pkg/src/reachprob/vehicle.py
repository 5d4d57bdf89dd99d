"""Planar vehicle with heading-rate control in a nonlinear wind field.

State ``(x, y, theta)``; the vehicle moves at constant speed ``v`` and the
control is the heading rate.  One control interval of length ``dt`` is
integrated with ``substeps`` classical RK4 steps (10 by default), after
which the position is perturbed by a uniform draw from a disk of radius
``r``.  The target and the
obstacle are unit squares circling the origin on opposite sides.

The expectation and rollout loops for this kernel are compiled with numba
and parallelized over grid points (or rollouts).  Every random draw comes
from a counter-based stream keyed by the point, so results are identical for
any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .grid import GridSpec, interp3_z, locate
from .model import (
    ConstantPolicy,
    ControlSet,
    MovingBox,
    Policy,
    Scenario,
    StochasticKernel,
)
from .rng import ROLLOUT_TAG, SHARED_SLOT, _fold_bits, key4, uniform

TWO_PI = 2.0 * math.pi
ORBIT_RADIUS = 2.0
HALF_WIDTH = 0.5
ORBIT_RATE = math.pi / 40.0

DISK = 0
RING8 = 1

MC = 0
EXACT = 1


@dataclass(frozen=True)
class VehicleParams:
    v: float = 1.0
    dt: float = 0.1
    r: float = 0.1
    u_min: float = -1.0
    u_max: float = 1.0
    substeps: int = 10

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"speed v must be > 0, got {self.v}")
        if not self.dt > 0:
            raise ValueError(f"step dt must be > 0, got {self.dt}")
        if not self.r >= 0:
            raise ValueError(f"disturbance radius r must be >= 0, got {self.r}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")
        if not self.u_min < self.u_max:
            raise ValueError("control bounds must satisfy u_min < u_max")


# ---------------------------------------------------------------------------
# scalar numerics (compiled; the Python wrappers below call these)


@njit(cache=True, inline="always")
def _wrap(a):
    return a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)


@njit(cache=True, inline="always")
def _wind(x, y):
    return -y - 0.1 * y * y * y, x + 0.1 * x * x * x


@njit(cache=True, inline="always")
def _field(x, y, th, u, v):
    wx, wy = _wind(x, y)
    return v * math.cos(th) + wx, v * math.sin(th) + wy, u


@njit(cache=True, inline="always")
def _rk4(x, y, th, u, v, dt, ns):
    """``ns`` classical RK4 sub-steps of length ``dt / ns`` with constant ``u``."""
    h = dt / ns
    h2 = 0.5 * h
    for i in range(ns):
        t = th + (i * h) * u
        k1x, k1y, _ = _field(x, y, t, u, v)
        k2x, k2y, _ = _field(x + h2 * k1x, y + h2 * k1y, t + h2 * u, u, v)
        k3x, k3y, _ = _field(x + h2 * k2x, y + h2 * k2y, t + h2 * u, u, v)
        k4x, k4y, _ = _field(x + h * k3x, y + h * k3y, t + h * u, u, v)
        x = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    # theta' = u is constant over the step, so the update is exact
    return x, y, _wrap(th + u * dt)


@njit(cache=True, inline="always")
def _disk(u1, u2, r):
    rho = r * math.sqrt(u1)
    phi = TWO_PI * u2
    return rho * math.cos(phi), rho * math.sin(phi)


@njit(cache=True, inline="always")
def _atan2(dy, dx):
    if dx > 0.0:
        return math.atan(dy / dx)
    if dx < 0.0:
        if dy >= 0.0:
            return math.atan(dy / dx) + math.pi
        return math.atan(dy / dx) - math.pi
    if dy > 0.0:
        return 0.5 * math.pi
    if dy < 0.0:
        return -0.5 * math.pi
    return 0.0


@njit(cache=True, inline="always")
def _heading(x, y, th, k, wrap, u_min, u_max):
    a = k * ORBIT_RATE
    d = _atan2(ORBIT_RADIUS * math.sin(a) - y, ORBIT_RADIUS * math.cos(a) - x) - th
    if wrap:
        d = _wrap(d)
    if d < u_min:
        return u_min
    if d > u_max:
        return u_max
    return d


@njit(cache=True, inline="always")
def _pick(x, probs):
    acc = 0.0
    for j in range(probs.shape[0]):
        acc += probs[j]
        if x < acc:
            return j
    return probs.shape[0] - 1


# ---------------------------------------------------------------------------
# batched expectations over grid points


@njit(cache=True, inline="always")
def _fill_offsets(key, m, dist, r, ring, probs, dxs, dys):
    if dist == DISK:
        for j in range(m):
            dx, dy = _disk(uniform(key, np.uint64(2 * j)), uniform(key, np.uint64(2 * j + 1)), r)
            dxs[j] = dx
            dys[j] = dy
    else:
        for j in range(m):
            i = _pick(uniform(key, np.uint64(j)), probs)
            dxs[j] = ring[i, 0]
            dys[j] = ring[i, 1]


@njit(cache=True, inline="always")
def _flat_region(vals, lo, hi, cnt, per, st, sc, xd, yd, r, i2):
    """1.0 or 0.0 if every node any draw can touch holds that value, else -1.0.

    A Monte Carlo mean over such a region is exactly that value, because
    interpolation is clamped to the range of its corners.
    """
    if per[0] or per[1]:
        return -1.0
    a0, _ = locate(xd - r, lo[0], hi[0], cnt[0], per[0], sc[0])
    a1, _ = locate(xd + r, lo[0], hi[0], cnt[0], per[0], sc[0])
    b0, _ = locate(yd - r, lo[1], hi[1], cnt[1], per[1], sc[1])
    b1, _ = locate(yd + r, lo[1], hi[1], cnt[1], per[1], sc[1])
    first = vals[a0 * st[0] + b0 * st[1] + i2 * st[2]]
    if first != 0.0 and first != 1.0:
        return -1.0
    for i in range(a0, a1 + 2):
        for j in range(b0, b1 + 2):
            base = i * st[0] + j * st[1] + i2 * st[2]
            if vals[base] != first or vals[base + st[2]] != first:
                return -1.0
    return first


@njit(cache=True, inline="always")
def _expect_at(vals, lo, hi, cnt, per, st, sc, xd, yd, thd, i2, f2, mode, m, dxs, dys, ring, probs):
    acc = 0.0
    if mode == EXACT:
        for j in range(ring.shape[0]):
            acc += probs[j] * interp3_z(vals, lo, hi, cnt, per, st, sc,
                                        xd + ring[j, 0], yd + ring[j, 1], i2, f2)
        return acc
    for j in range(m):
        acc += interp3_z(vals, lo, hi, cnt, per, st, sc, xd + dxs[j], yd + dys[j], i2, f2)
    return acc / m


@njit(cache=True, inline="always")
def _expect_point(vals, lo, hi, cnt, per, st, sc, x, y, th, u, v, dt, ns, mode, m,
                  key, fresh, dist, r, ring, probs, dxs, dys):
    """Expectation for one state and control.

    Draws are generated from ``key`` only when ``fresh`` is set and the
    region test fails; otherwise ``dxs``/``dys`` are used as they are.  Returns
    the value and whether the draws were generated.
    """
    xd, yd, thd = _rk4(x, y, th, u, v, dt, ns)
    # the disturbance leaves theta alone, so its cell is shared by all draws
    i2, f2 = locate(thd, lo[2], hi[2], cnt[2], per[2], sc[2])
    flat = _flat_region(vals, lo, hi, cnt, per, st, sc, xd, yd, r, i2)
    if flat >= 0.0:
        return flat, False
    if mode == MC and fresh:
        _fill_offsets(key, m, dist, r, ring, probs, dxs, dys)
    return _expect_at(vals, lo, hi, cnt, per, st, sc, xd, yd, thd, i2, f2,
                      mode, m, dxs, dys, ring, probs), fresh


@njit(cache=True, parallel=True)
def _expect_each(vals, lo, hi, cnt, per, st, sc, states, controls, seed, k, words,
                 v, dt, ns, mode, m, dist, r, ring, probs):
    n = states.shape[0]
    out = np.empty(n)
    for i in prange(n):
        dxs = np.empty(m)
        dys = np.empty(m)
        key = key4(seed, k, words[i], np.uint64(SHARED_SLOT))
        e, _ = _expect_point(vals, lo, hi, cnt, per, st, sc, states[i, 0], states[i, 1], states[i, 2],
                             controls[i], v, dt, ns, mode, m, key, True, dist, r, ring, probs, dxs, dys)
        out[i] = e
    return out


@njit(cache=True, inline="always")
def _best_control(vals, lo, hi, cnt, per, st, sc, x, y, th, controls, seed, k, word, crn,
                  v, dt, ns, mode, m, dist, r, ring, probs, dxs, dys, row):
    """Max over controls (first strict improvement from 0); fills ``row`` if non-empty."""
    shared = key4(seed, k, word, np.uint64(SHARED_SLOT))
    have = False
    best = 0.0
    arg = 0
    for c in range(controls.shape[0]):
        if crn:
            e, made = _expect_point(vals, lo, hi, cnt, per, st, sc, x, y, th, controls[c], v, dt, ns,
                                    mode, m, shared, not have, dist, r, ring, probs, dxs, dys)
            have = have or made
        else:
            key = key4(seed, k, word, np.uint64(c))
            e, _ = _expect_point(vals, lo, hi, cnt, per, st, sc, x, y, th, controls[c], v, dt, ns,
                                 mode, m, key, True, dist, r, ring, probs, dxs, dys)
        if row.shape[0]:
            row[c] = e
        if best < e:
            best = e
            arg = c
    return best, arg


@njit(cache=True, parallel=True)
def _expect_table(vals, lo, hi, cnt, per, st, sc, states, controls, seed, k, words, crn,
                  v, dt, ns, mode, m, dist, r, ring, probs, reduce_max):
    n = states.shape[0]
    nc = controls.shape[0]
    table = np.empty((n, 1 if reduce_max else nc))
    arg = np.zeros(n, dtype=np.int64)
    for i in prange(n):
        dxs = np.empty(m)
        dys = np.empty(m)
        row = table[i, :0] if reduce_max else table[i]
        best, a = _best_control(vals, lo, hi, cnt, per, st, sc, states[i, 0], states[i, 1], states[i, 2],
                                controls, seed, k, words[i], crn, v, dt, ns, mode, m, dist, r, ring, probs,
                                dxs, dys, row)
        arg[i] = a
        if reduce_max:
            table[i, 0] = best
    return table, arg


# ---------------------------------------------------------------------------
# batched rollouts


@njit(cache=True, inline="always")
def _in_box(x, y, th, lo, hi):
    return (lo[0] <= x <= hi[0]) and (lo[1] <= y <= hi[1]) and (lo[2] <= th <= hi[2])


@njit(cache=True, parallel=True)
def _rollouts(starts, n, seed, words, horizon, a_lo, a_hi, b_lo, b_hi,
              policy_kind, const_u, wrap, u_min, u_max,
              fields, lo, hi, cnt, per, st, sc, controls, e_seed, crn, e_mode, m,
              v, dt, ns, dist, r, ring, probs, keep_paths):
    """Outcome per (start, rollout): 1 success, 0 obstacle hit, -1 horizon exhausted.

    ``policy_kind``: 0 heading, 1 constant, 2 optimal (argmax over ``controls``
    of the expectation of ``fields[k + 1]``).
    """
    p = starts.shape[0]
    total = p * n
    outcome = np.empty(total, dtype=np.int8)
    stop = np.empty(total, dtype=np.int64)
    paths = np.full((total if keep_paths else 1, horizon + 1, 3), np.nan)
    for job in prange(total):
        ip = job // n
        j = job - ip * n
        key = key4(seed, np.uint64(ROLLOUT_TAG), words[ip], np.uint64(j))
        x = starts[ip, 0]
        y = starts[ip, 1]
        th = starts[ip, 2]
        dxs = np.empty(m)
        dys = np.empty(m)
        buf = np.empty(3)
        empty = np.empty(0)
        ctr = 0
        res = -1
        last = horizon
        for k in range(horizon + 1):
            if keep_paths:
                paths[job, k, 0] = x
                paths[job, k, 1] = y
                paths[job, k, 2] = th
            if _in_box(x, y, th, b_lo[k], b_hi[k]):
                res = 0
                last = k
                break
            if _in_box(x, y, th, a_lo[k], a_hi[k]):
                res = 1
                last = k
                break
            if k == horizon:
                break
            if policy_kind == 0:
                u = _heading(x, y, th, k, wrap, u_min, u_max)
            elif policy_kind == 1:
                u = const_u
            else:
                buf[0] = x
                buf[1] = y
                buf[2] = th
                w = _fold_bits(buf.view(np.uint64))
                _, bi = _best_control(fields[k + 1], lo, hi, cnt, per, st, sc, x, y, th, controls,
                                      e_seed, np.uint64(k), w, crn, v, dt, ns, e_mode, m, dist, r,
                                      ring, probs, dxs, dys, empty)
                u = controls[bi]
            xd, yd, th = _rk4(x, y, th, u, v, dt, ns)
            if dist == DISK:
                dx, dy = _disk(uniform(key, np.uint64(ctr)), uniform(key, np.uint64(ctr + 1)), r)
                ctr += 2
            else:
                i = _pick(uniform(key, np.uint64(ctr)), probs)
                dx = ring[i, 0]
                dy = ring[i, 1]
                ctr += 1
            x = xd + dx
            y = yd + dy
        outcome[job] = res
        stop[job] = last
    return outcome, stop, paths


# ---------------------------------------------------------------------------
# public functions


def wrap_angle(a: float) -> float:
    """Wrap an angle to ``(-pi, pi]``."""
    return float(_wrap(float(a)))


def wind(x: float, y: float) -> tuple[float, float]:
    wx, wy = _wind(float(x), float(y))
    return float(wx), float(wy)


def vector_field(s, u: float, v: float = 1.0) -> tuple[float, float, float]:
    x, y, th = (float(c) for c in s)
    dx, dy, dth = _field(x, y, th, float(u), float(v))
    return float(dx), float(dy), float(dth)


def rk4_step(s, u: float, dt: float = 0.1, v: float = 1.0, substeps: int = 10) -> np.ndarray:
    """Integrate the wind-field dynamics over ``dt`` with constant ``u``.

    Uses ``substeps`` classical RK4 steps; ``substeps=1`` is a single step.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x, y, th = (float(c) for c in s)
    return np.array(_rk4(x, y, th, float(u), float(v), float(dt), int(substeps)))


def disk_sample(rng, r: float) -> tuple[float, float]:
    """Uniform draw on the closed disk of radius ``r`` (two uniforms from ``rng``)."""
    if r < 0:
        raise ValueError("r must be >= 0")
    u1 = rng.random()
    u2 = rng.random()
    dx, dy = _disk(float(u1), float(u2), float(r))
    return float(dx), float(dy)


def atan2(dy: float, dx: float) -> float:
    """Four-quadrant arctangent in ``(-pi, pi]``; ``atan2(0, 0) == 0``."""
    return float(_atan2(float(dy), float(dx)))


def target_center(k: int) -> tuple[float, float]:
    a = k * ORBIT_RATE
    return ORBIT_RADIUS * math.cos(a), ORBIT_RADIUS * math.sin(a)


def obstacle_center(k: int) -> tuple[float, float]:
    a = k * ORBIT_RATE + math.pi
    return ORBIT_RADIUS * math.cos(a), ORBIT_RADIUS * math.sin(a)


def moving_square_sets(k: int | None = None):
    """Target and obstacle squares; with ``k`` given, also their ``k``-th boxes.

    Returns the pair of :class:`MovingBox` sets when ``k`` is None, otherwise
    the two ``(lower, upper)`` bound pairs at step ``k``.
    """
    target = MovingBox(3, (0, 1), HALF_WIDTH, target_center)
    obstacle = MovingBox(3, (0, 1), HALF_WIDTH, obstacle_center)
    if k is None:
        return target, obstacle
    if k < 0:
        raise ValueError("k must be >= 0")
    return target.bounds(k), obstacle.bounds(k)


def ring_offsets(r: float, count: int = 8) -> np.ndarray:
    ang = TWO_PI * np.arange(count) / count
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)])


class VehicleKernel(StochasticKernel):
    """Wind-field vehicle with a disk (``"disk"``) or 8-point ring (``"ring8"``) disturbance.

    The ring variant puts probability 1/8 on each of eight offsets of length
    ``r`` and has finite support, so exact expectations are available.
    """

    dimension = 3

    def __init__(self, params: VehicleParams = VehicleParams(), disturbance: str = "disk"):
        if disturbance not in ("disk", "ring8"):
            raise ValueError(f"unknown disturbance {disturbance!r}")
        self.params = params
        self.disturbance = disturbance
        self.has_exact = disturbance == "ring8"
        self._dist = DISK if disturbance == "disk" else RING8
        self._ring = ring_offsets(params.r) if self.has_exact else np.zeros((1, 2))
        self._probs = np.full(len(self._ring), 1.0 / len(self._ring))

    def __repr__(self):
        return f"VehicleKernel({self.params!r}, disturbance={self.disturbance!r})"

    def deterministic(self, s, u) -> np.ndarray:
        return rk4_step(s, u, self.params.dt, self.params.v, self.params.substeps)

    def sample_one(self, s, u, rng):
        nxt = self.deterministic(s, u)
        if self._dist == DISK:
            dx, dy = disk_sample(rng, self.params.r)
        else:
            i = _pick(float(rng.random()), self._probs)
            dx, dy = self._ring[i]
        nxt[0] += dx
        nxt[1] += dy
        return nxt

    def exact_successors(self, s, u):
        if not self.has_exact:
            return super().exact_successors(s, u)
        nxt = self.deterministic(s, u)
        return [
            (nxt + np.array([dx, dy, 0.0]), float(p))
            for (dx, dy), p in zip(self._ring, self._probs)
        ]

    # -- compiled batch paths ----------------------------------------------

    def _common(self, est):
        p = self.params
        return (p.v, p.dt, int(p.substeps), EXACT if est.is_exact else MC, int(est.m), self._dist, p.r,
                self._ring, self._probs)

    def expect_each(self, field, states, controls, est, k, words):
        self._check_mode(est)
        if field.spec.ndim != 3:
            return super().expect_each(field, states, controls, est, k, words)
        return _expect_each(
            field.values, *field.spec.packed(),
            np.ascontiguousarray(states, dtype=float),
            np.ascontiguousarray(controls, dtype=float),
            np.uint64(est.seed), np.uint64(k), np.ascontiguousarray(words, dtype=np.uint64),
            *self._common(est),
        )

    def _table(self, field, states, controls, est, k, words, reduce_max):
        return _expect_table(
            field.values, *field.spec.packed(),
            np.ascontiguousarray(states, dtype=float),
            np.asarray(controls, dtype=float),
            np.uint64(est.seed), np.uint64(k), np.ascontiguousarray(words, dtype=np.uint64),
            bool(est.common_random_numbers),
            *self._common(est), reduce_max,
        )

    def expect_table(self, field, states, controls, est, k, words):
        self._check_mode(est)
        return self._table(field, states, controls, est, k, words, False)[0]

    def expect_max(self, field, states, controls, est, k, words):
        self._check_mode(est)
        table, arg = self._table(field, states, controls, est, k, words, True)
        return table[:, 0], arg


def vehicle_kernel(params: VehicleParams = VehicleParams(), disturbance: str = "disk") -> VehicleKernel:
    return VehicleKernel(params, disturbance)


class HeadingPolicy(Policy):
    """Turn toward the current target center at the largest admissible rate.

    With ``wrap=True`` the heading error is wrapped to ``(-pi, pi]`` before
    clamping; ``wrap=False`` clamps the raw difference.
    """

    def __init__(self, params: VehicleParams = VehicleParams(), wrap: bool = True):
        self.params = params
        self.wrap = wrap

    def evaluate(self, s, k):
        x, y, th = (float(c) for c in s)
        return float(_heading(x, y, th, k, self.wrap, self.params.u_min, self.params.u_max))

    def evaluate_many(self, states, k):
        return _heading_many(np.ascontiguousarray(states, dtype=float), k, self.wrap,
                             self.params.u_min, self.params.u_max)

    def __repr__(self):
        return f"HeadingPolicy(wrap={self.wrap})"


@njit(cache=True)
def _heading_many(states, k, wrap, u_min, u_max):
    out = np.empty(states.shape[0])
    for i in range(states.shape[0]):
        out[i] = _heading(states[i, 0], states[i, 1], states[i, 2], k, wrap, u_min, u_max)
    return out


def heading_policy(s, k: int, wrap: bool = True, params: VehicleParams = VehicleParams()) -> float:
    return HeadingPolicy(params, wrap).evaluate(s, k)


def vehicle_grid(n_xy: int = 201, n_theta: int = 201, extent: float = 4.0) -> GridSpec:
    return GridSpec.uniform(
        [(-extent, extent), (-extent, extent), (-math.pi, math.pi)],
        [n_xy, n_xy, n_theta],
        periodic=[False, False, True],
        names=["x", "y", "theta"],
    )


def vehicle_scenario(
    grid: GridSpec | None = None,
    params: VehicleParams = VehicleParams(),
    controls: ControlSet | None = None,
    horizon: int = 23,
    gamma: float = 0.6,
    samples: int = 10000,
    disturbance: str = "disk",
) -> Scenario:
    target, obstacle = moving_square_sets()
    return Scenario(
        kernel=VehicleKernel(params, disturbance),
        target=target,
        obstacle=obstacle,
        controls=controls if controls is not None else ControlSet.linspace(params.u_min, params.u_max, 21),
        horizon=horizon,
        gamma=gamma,
        samples=samples,
        grid=grid if grid is not None else vehicle_grid(),
    )


__all__ = [
    "VehicleParams", "VehicleKernel", "HeadingPolicy", "ConstantPolicy",
    "wind", "vector_field", "rk4_step", "disk_sample", "atan2", "wrap_angle",
    "moving_square_sets", "heading_policy", "vehicle_kernel", "vehicle_grid",
    "vehicle_scenario", "target_center", "obstacle_center", "ring_offsets",
]
