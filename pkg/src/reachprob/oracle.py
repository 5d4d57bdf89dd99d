"""Exact reach-avoid probabilities for small finite chains.

Everything here is computed from explicit transition lists with plain loops
and shares no code with :mod:`reachprob.solver`, so agreement between the two
is evidence about the solver rather than a restatement of it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import GridSpec
from .model import ControlSet, Scenario, StochasticKernel, TimeVaryingSet

_KEY_DIGITS = 9


def _key(s) -> tuple:
    return tuple(round(float(c), _KEY_DIGITS) + 0.0 for c in np.atleast_1d(s))


@dataclass
class FiniteChain:
    """Finite-state chain; ``transitions[i][c]`` lists ``(successor, probability)``."""

    states: np.ndarray
    controls: ControlSet
    transitions: Sequence[Sequence[Sequence[tuple[int, float]]]]
    target: TimeVaryingSet
    obstacle: TimeVaryingSet
    horizon: int

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if not isinstance(self.controls, ControlSet):
            self.controls = ControlSet(self.controls)
        n = len(self.states)
        if len(self.transitions) != n:
            raise ValueError(f"need a transition row per state ({n}), got {len(self.transitions)}")
        for i, rows in enumerate(self.transitions):
            if len(rows) != len(self.controls):
                raise ValueError(f"state {i}: need one transition list per control")
            for c, row in enumerate(rows):
                if not row:
                    raise ValueError(f"state {i}, control {c}: empty transition list")
                total = 0.0
                for j, p in row:
                    if not 0 <= j < n:
                        raise ValueError(f"state {i}, control {c}: successor {j} out of range")
                    if p < 0:
                        raise ValueError(f"state {i}, control {c}: negative probability")
                    total += p
                if abs(total - 1.0) > 1e-12:
                    raise ValueError(f"state {i}, control {c}: probabilities sum to {total}")
        self._index = {_key(s): i for i, s in enumerate(self.states)}
        if len(self._index) != n:
            raise ValueError("chain states must be distinct")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index_of(self, s) -> int | None:
        return self._index.get(_key(s))

    def control_index(self, u) -> int:
        for c, v in enumerate(self.controls):
            if v == u:
                return c
        raise ValueError(f"control {u!r} is not in the chain's control set {tuple(self.controls)}")

    def in_target(self, i: int, k: int) -> bool:
        return bool(self.target.contains(self.states[i], k))

    def in_obstacle(self, i: int, k: int) -> bool:
        return bool(self.obstacle.contains(self.states[i], k))


def exact_reach_avoid(chain: FiniteChain, policy) -> np.ndarray:
    """Table ``P[k, i]`` of reach-avoid probabilities under a fixed policy."""
    T = chain.horizon
    n = chain.n_states
    P = np.zeros((T + 1, n))
    for i in range(n):
        P[T, i] = 1.0 if chain.in_target(i, T) and not chain.in_obstacle(i, T) else 0.0
    for k in range(T - 1, -1, -1):
        for i in range(n):
            if chain.in_obstacle(i, k):
                P[k, i] = 0.0
            elif chain.in_target(i, k):
                P[k, i] = 1.0
            else:
                c = chain.control_index(policy(chain.states[i], k))
                acc = 0.0
                for j, p in chain.transitions[i][c]:
                    acc += p * P[k + 1, j]
                P[k, i] = acc
    return P


def exact_reach_avoid_max(chain: FiniteChain):
    """Optimal table ``P[k, i]`` and greedy control indices ``arg[k, i]`` for ``k < T``.

    The greedy index is computed for every state (also inside the target or the
    obstacle) from ``P[k + 1]``, starting at 0 and moving only on strict
    improvement.
    """
    T = chain.horizon
    n = chain.n_states
    P = np.zeros((T + 1, n))
    arg = np.zeros((max(T, 0), n), dtype=np.int64)
    for i in range(n):
        P[T, i] = 1.0 if chain.in_target(i, T) and not chain.in_obstacle(i, T) else 0.0
    for k in range(T - 1, -1, -1):
        for i in range(n):
            best = 0.0
            best_c = 0
            for c in range(len(chain.controls)):
                acc = 0.0
                for j, p in chain.transitions[i][c]:
                    acc += p * P[k + 1, j]
                if best < acc:
                    best = acc
                    best_c = c
            arg[k, i] = best_c
            if chain.in_obstacle(i, k):
                P[k, i] = 0.0
            elif chain.in_target(i, k):
                P[k, i] = 1.0
            else:
                P[k, i] = best
    return P, arg


def enumerate_reach_avoid(chain: FiniteChain, policy, start: int, k0: int = 0) -> float:
    """Reach-avoid probability from ``start`` by summing over every trajectory.

    Each path ``s_k0 .. s_T`` is weighted by its probability and counted when
    some step enters the target while no step up to and including it touches
    the obstacle.  Exponential in the horizon; meant for tiny chains.
    """
    T = chain.horizon

    def succeeds(path):
        for off, i in enumerate(path):
            k = k0 + off
            if chain.in_obstacle(i, k):
                return False
            if chain.in_target(i, k):
                return True
        return False

    total = 0.0
    frontier = [((start,), 1.0)]
    for k in range(k0, T):
        nxt = []
        for path, w in frontier:
            c = chain.control_index(policy(chain.states[path[-1]], k))
            for j, p in chain.transitions[path[-1]][c]:
                nxt.append((path + (j,), w * p))
        frontier = nxt
    for path, w in frontier:
        if succeeds(path):
            total += w
    return total


def enumerate_policies(chain: FiniteChain, start: int, k0: int = 0) -> float:
    """Best reach-avoid probability from ``start`` by search over the trajectory tree.

    The maximization happens at every tree node separately (history-dependent
    choice), which upper-bounds every Markov policy and equals the optimum.
    """
    T = chain.horizon

    def node(i, k, alive):
        if chain.in_obstacle(i, k):
            return 0.0
        if chain.in_target(i, k):
            return 1.0
        if k == T:
            return 0.0
        best = 0.0
        for c in range(len(chain.controls)):
            v = sum(p * node(j, k + 1, alive) for j, p in chain.transitions[i][c])
            best = max(best, v)
        return best

    return node(start, k0, True)


# ---------------------------------------------------------------------------
# solver adapters


class StateIndexSet(TimeVaryingSet):
    """Membership by chain state index; ``members(k)`` gives the indices at step ``k``."""

    def __init__(self, states, members: Callable[[int], Sequence[int]] | Sequence[int]):
        self._index = {_key(s): i for i, s in enumerate(np.atleast_2d(states))}
        if callable(members):
            self._members = members
        else:
            fixed = frozenset(int(i) for i in members)
            self._members = lambda k: fixed

    def contains(self, s, k):
        i = self._index.get(_key(s))
        return i is not None and i in self._members(k)


class ChainKernel(StochasticKernel):
    """Chain transitions as a finite-support kernel on its state vectors.

    States outside the chain (other grid nodes) are absorbing.
    """

    has_exact = True

    def __init__(self, chain: FiniteChain):
        self.chain = chain
        self.dimension = chain.states.shape[1]

    def exact_successors(self, s, u):
        i = self.chain.index_of(s)
        if i is None:
            return [(np.asarray(s, dtype=float).copy(), 1.0)]
        c = self.chain.control_index(u)
        return [(self.chain.states[j].copy(), float(p)) for j, p in self.chain.transitions[i][c]]

    def sample_one(self, s, u, rng):
        succ = self.exact_successors(s, u)
        x = rng.random()
        acc = 0.0
        for p, w in succ:
            acc += w
            if x < acc:
                return p
        return succ[-1][0]


def chain_scenario(chain: FiniteChain, grid: GridSpec, gamma: float = 0.5, samples: int = 1000) -> Scenario:
    pts = grid.points()
    on_grid = {_key(p) for p in pts}
    missing = [tuple(s) for s in chain.states if _key(s) not in on_grid]
    if missing:
        raise ValueError(f"chain states {missing[:3]} are not grid points")
    return Scenario(
        kernel=ChainKernel(chain),
        target=chain.target,
        obstacle=chain.obstacle,
        controls=chain.controls,
        horizon=chain.horizon,
        gamma=gamma,
        samples=samples,
        grid=grid,
    )


def random_chain(rng: np.random.Generator, grid: GridSpec, n_states: int, n_controls: int,
                 horizon: int, max_succ: int = 3) -> FiniteChain:
    """Random chain on distinct grid points with time-varying target and obstacle."""
    pts = grid.points()
    pick = rng.choice(len(pts), size=n_states, replace=False)
    states = pts[pick]
    transitions = []
    for _ in range(n_states):
        rows = []
        for _ in range(n_controls):
            k = int(rng.integers(1, min(max_succ, n_states) + 1))
            succ = rng.choice(n_states, size=k, replace=False)
            w = rng.random(k) + 0.05
            w = w / w.sum()
            w[-1] = 1.0 - w[:-1].sum()
            rows.append([(int(j), float(p)) for j, p in zip(succ, w)])
        transitions.append(rows)
    tgt = [set(rng.choice(n_states, size=int(rng.integers(0, min(2, n_states) + 1)), replace=False).tolist())
           for _ in range(horizon + 1)]
    obs = [set(rng.choice(n_states, size=int(rng.integers(0, min(2, n_states) + 1)), replace=False).tolist())
           for _ in range(horizon + 1)]
    return FiniteChain(
        states=states,
        controls=ControlSet(range(n_controls)),
        transitions=transitions,
        target=StateIndexSet(states, lambda k, t=tgt: t[k]),
        obstacle=StateIndexSet(states, lambda k, o=obs: o[k]),
        horizon=horizon,
    )


def all_markov_policies(chain: FiniteChain):
    """Every deterministic Markov policy of a tiny chain, as callables."""
    n = chain.n_states
    T = chain.horizon
    C = len(chain.controls)
    for table in itertools.product(range(C), repeat=n * max(T, 1)):
        tab = np.array(table).reshape(max(T, 1), n)

        def pol(s, k, tab=tab):
            i = chain.index_of(s)
            return chain.controls[tab[min(k, tab.shape[0] - 1), i]]

        yield pol
