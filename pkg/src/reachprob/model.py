"""Scenario building blocks: kernels, time-varying sets, controls, policies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import CapabilityError
from .grid import GridSpec, ValueField, interpolate_many
from .rng import SHARED_SLOT, Stream, derive_key


@njit(cache=True)
def _seq_mean(vals):
    acc = 0.0
    for v in vals:
        acc += v
    return acc / vals.shape[0]


@njit(cache=True)
def _seq_dot(p, vals):
    acc = 0.0
    for j in range(vals.shape[0]):
        acc += p[j] * vals[j]
    return acc


class StochasticKernel:
    """Transition kernel ``s' ~ F(. | s, u)``.

    Subclasses implement :meth:`sample_one`; finite-support kernels also
    implement :meth:`exact_successors`.  The ``expect_*`` methods are the batch
    entry points the solver uses; the versions here loop in Python and are
    meant to be overridden by kernels with a compiled path.
    """

    dimension: int = 0
    has_exact: bool = False

    def sample_one(self, s: np.ndarray, u, rng) -> np.ndarray:
        raise NotImplementedError

    def exact_successors(self, s: np.ndarray, u) -> list[tuple[np.ndarray, float]]:
        raise CapabilityError(f"{type(self).__name__} has no finite support")

    # -- batch expectations ------------------------------------------------

    def expect_one(self, field: ValueField, s, u, est, rng) -> float:
        if est.is_exact:
            succ = self.exact_successors(np.asarray(s, dtype=float), u)
            pts = np.array([p for p, _ in succ], dtype=float).reshape(len(succ), -1)
            probs = np.array([w for _, w in succ], dtype=float)
            return float(_seq_dot(probs, interpolate_many(field, pts)))
        samples = draw_samples(self, s, u, rng, est.m)
        return float(_seq_mean(interpolate_many(field, samples)))

    def expect_each(self, field, states, controls, est, k, words) -> np.ndarray:
        """One expectation per row of ``states`` under the matching control."""
        self._check_mode(est)
        out = np.empty(len(states))
        for i in range(len(states)):
            rng = Stream(derive_key(est.seed, k, int(words[i]), SHARED_SLOT))
            out[i] = self.expect_one(field, states[i], controls[i], est, rng)
        return out

    def expect_table(self, field, states, controls, est, k, words) -> np.ndarray:
        """``(N, C)`` table of expectations for every state and control."""
        self._check_mode(est)
        out = np.empty((len(states), len(controls)))
        for i in range(len(states)):
            for c, u in enumerate(controls):
                slot = SHARED_SLOT if est.common_random_numbers else c
                rng = Stream(derive_key(est.seed, k, int(words[i]), slot))
                out[i, c] = self.expect_one(field, states[i], u, est, rng)
        return out

    def expect_max(self, field, states, controls, est, k, words):
        """Best expectation and its control index; first strict improvement wins."""
        table = self.expect_table(field, states, controls, est, k, words)
        return best_of(table)

    def _check_mode(self, est):
        if est.is_exact and not self.has_exact:
            raise CapabilityError(
                f"exact expectations need a finite-support kernel, "
                f"{type(self).__name__} has none"
            )


def best_of(table: np.ndarray):
    """Row-wise max starting from 0 with strict improvement (lowest index on ties)."""
    best = np.zeros(table.shape[0])
    arg = np.zeros(table.shape[0], dtype=np.int64)
    for c in range(table.shape[1]):
        better = best < table[:, c]
        best[better] = table[better, c]
        arg[better] = c
    return best, arg


class FiniteSupportKernel(StochasticKernel):
    """Kernel given by an explicit successor list per ``(s, u)``."""

    has_exact = True

    def __init__(self, dimension: int, successors: Callable):
        self.dimension = dimension
        self._successors = successors

    def exact_successors(self, s, u):
        succ = [(np.asarray(p, dtype=float), float(w)) for p, w in self._successors(s, u)]
        total = sum(w for _, w in succ)
        if any(w <= 0 for _, w in succ) or abs(total - 1.0) > 1e-12:
            raise ValueError(f"successor probabilities must be positive and sum to 1, got {total}")
        return succ

    def sample_one(self, s, u, rng):
        succ = self.exact_successors(s, u)
        x = rng.random()
        acc = 0.0
        for p, w in succ:
            acc += w
            if x < acc:
                return p.copy()
        return succ[-1][0].copy()


def draw_samples(kernel: StochasticKernel, s, u, rng, m: int) -> np.ndarray:
    """``m`` independent draws from ``kernel`` at ``(s, u)`` as an ``(m, n)`` array."""
    if m < 1:
        raise ValueError("m must be >= 1")
    s = np.asarray(s, dtype=float)
    return np.array([kernel.sample_one(s, u, rng) for _ in range(m)]).reshape(m, -1)


# ---------------------------------------------------------------------------
# sets


class TimeVaryingSet:
    """Membership predicate ``s in X_k``."""

    def contains(self, s, k: int) -> bool:
        raise NotImplementedError

    def contains_many(self, states: np.ndarray, k: int) -> np.ndarray:
        return np.fromiter((self.contains(s, k) for s in states), bool, len(states))


class PredicateSet(TimeVaryingSet):
    def __init__(self, fn: Callable[[np.ndarray, int], bool]):
        self.fn = fn

    def contains(self, s, k):
        return bool(self.fn(np.asarray(s, dtype=float), k))


class EmptySet(TimeVaryingSet):
    def contains(self, s, k):
        return False

    def contains_many(self, states, k):
        return np.zeros(len(states), dtype=bool)


class WholeSpace(TimeVaryingSet):
    def contains(self, s, k):
        return True

    def contains_many(self, states, k):
        return np.ones(len(states), dtype=bool)


class BoxSequence(TimeVaryingSet):
    """Closed axis-aligned box whose bounds depend on ``k``.

    ``bounds(k)`` returns ``(lower, upper)`` arrays of full state dimension;
    unconstrained axes use infinite bounds.
    """

    def __init__(self, bounds: Callable[[int], tuple[np.ndarray, np.ndarray]]):
        self._bounds = bounds

    def bounds(self, k: int):
        lo, hi = self._bounds(k)
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)

    def bounds_table(self, horizon: int):
        """Stacked ``(horizon + 1, n)`` lower and upper bounds."""
        pairs = [self.bounds(k) for k in range(horizon + 1)]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def contains(self, s, k):
        lo, hi = self.bounds(k)
        s = np.asarray(s, dtype=float)
        return bool(np.all((s >= lo) & (s <= hi)))

    def contains_many(self, states, k):
        lo, hi = self.bounds(k)
        return np.all((states >= lo) & (states <= hi), axis=1)


class MovingBox(BoxSequence):
    """Box with fixed half-widths on ``axes`` around ``center(k)``."""

    def __init__(self, ndim: int, axes: Sequence[int], half_widths, center: Callable[[int], Sequence[float]]):
        self.ndim = ndim
        self.axes = tuple(axes)
        self.half_widths = np.broadcast_to(np.asarray(half_widths, dtype=float), (len(self.axes),))
        self.center = center
        super().__init__(self._box)

    def _box(self, k):
        lo = np.full(self.ndim, -np.inf)
        hi = np.full(self.ndim, np.inf)
        c = np.asarray(self.center(k), dtype=float)
        for j, d in enumerate(self.axes):
            lo[d] = c[j] - self.half_widths[j]
            hi[d] = c[j] + self.half_widths[j]
        return lo, hi


def indicator_target(target: TimeVaryingSet, s, k: int) -> int:
    return 1 if target.contains(s, k) else 0


def indicator_obstacle_complement(obstacle: TimeVaryingSet, s, k: int) -> int:
    return 0 if obstacle.contains(s, k) else 1


# ---------------------------------------------------------------------------
# controls and policies


class ControlSet(tuple):
    """Ordered, finite, duplicate-free list of control values."""

    def __new__(cls, values):
        values = tuple(float(v) for v in values)
        if not values:
            raise ValueError("control set must be non-empty")
        if len(set(values)) != len(values):
            raise ValueError("control set has duplicate entries")
        return super().__new__(cls, values)

    @classmethod
    def linspace(cls, lower: float, upper: float, count: int) -> "ControlSet":
        if count == 1:
            return cls([lower])
        step = (upper - lower) / (count - 1)
        return cls(lower + i * step for i in range(count))

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    def nearest(self, u: float) -> float:
        arr = self.as_array()
        return float(arr[np.argmin(np.abs(arr - u))])


class Policy:
    """Deterministic map ``(state, k) -> control``."""

    def evaluate(self, s, k: int):
        raise NotImplementedError

    def __call__(self, s, k: int):
        return self.evaluate(s, k)

    def evaluate_many(self, states: np.ndarray, k: int) -> np.ndarray:
        return np.array([self.evaluate(s, k) for s in states], dtype=float)


class ConstantPolicy(Policy):
    def __init__(self, u: float):
        self.u = float(u)

    def evaluate(self, s, k):
        return self.u

    def evaluate_many(self, states, k):
        return np.full(len(states), self.u)

    def __repr__(self):
        return f"ConstantPolicy({self.u!r})"


class FunctionPolicy(Policy):
    def __init__(self, fn: Callable):
        self.fn = fn

    def evaluate(self, s, k):
        return self.fn(np.asarray(s, dtype=float), k)


class SnappedPolicy(Policy):
    """Wraps a policy and rounds its output to the nearest member of a control set."""

    def __init__(self, inner: Policy, controls: ControlSet):
        self.inner = inner
        self.controls = controls
        self._arr = controls.as_array()

    def evaluate(self, s, k):
        return self.controls.nearest(self.inner.evaluate(s, k))

    def evaluate_many(self, states, k):
        raw = self.inner.evaluate_many(states, k)
        return self._arr[np.argmin(np.abs(raw[:, None] - self._arr[None, :]), axis=1)]


# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    kernel: StochasticKernel
    target: TimeVaryingSet
    obstacle: TimeVaryingSet
    controls: ControlSet
    horizon: int
    gamma: float
    samples: int
    grid: GridSpec

    def __post_init__(self):
        if not isinstance(self.controls, ControlSet):
            self.controls = ControlSet(self.controls)
        if self.grid.ndim != self.kernel.dimension:
            raise ValueError(
                f"grid has {self.grid.ndim} axes, kernel has dimension {self.kernel.dimension}"
            )
        if int(self.horizon) != self.horizon or self.horizon < 0:
            raise ValueError(f"horizon must be a non-negative integer, got {self.horizon}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        self.horizon = int(self.horizon)
