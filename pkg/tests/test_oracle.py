import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachprob.grid import GridSpec, interpolate
from reachprob.model import ConstantPolicy, ControlSet, FunctionPolicy
from reachprob.oracle import (
    FiniteChain,
    StateIndexSet,
    all_markov_policies,
    chain_scenario,
    enumerate_policies,
    enumerate_reach_avoid,
    exact_reach_avoid,
    exact_reach_avoid_max,
    random_chain,
)
from reachprob.solver import ExpectationEstimator, optimal_policy, solve_fixed, solve_optimal

EXACT = ExpectationEstimator.exact()
GRID = GridSpec.uniform([(0.0, 3.0), (0.0, 2.0)], [4, 3])  # 12 nodes


def two_state():
    states = [[0.0], [1.0]]
    return FiniteChain(states, ControlSet([0.0]), [[[(0, 0.5), (1, 0.5)]], [[(1, 1.0)]]],
                       StateIndexSet(states, [1]), StateIndexSet(states, []), 2)


def test_two_state_values():
    P = exact_reach_avoid(two_state(), ConstantPolicy(0.0))
    assert P[0].tolist() == [0.75, 1.0]
    assert P[1].tolist() == [0.5, 1.0]
    assert P[2].tolist() == [0.0, 1.0]
    assert enumerate_reach_avoid(two_state(), ConstantPolicy(0.0), 0) == 0.75


def test_chain_validation():
    states = [[0.0], [1.0]]
    tgt = StateIndexSet(states, [])
    with pytest.raises(ValueError):
        FiniteChain(states, ControlSet([0.0]), [[[(0, 0.6)]], [[(1, 1.0)]]], tgt, tgt, 1)
    with pytest.raises(ValueError):
        FiniteChain(states, ControlSet([0.0]), [[[(2, 1.0)]], [[(1, 1.0)]]], tgt, tgt, 1)
    with pytest.raises(ValueError):
        FiniteChain([[0.0], [0.0]], ControlSet([0.0]), [[[(0, 1.0)]], [[(1, 1.0)]]], tgt, tgt, 1)
    with pytest.raises(ValueError):
        two_state().control_index(0.5)


def test_obstacle_before_target():
    states = [[0.0], [1.0]]
    both = StateIndexSet(states, [1])
    ch = FiniteChain(states, ControlSet([0.0]), [[[(1, 1.0)]], [[(1, 1.0)]]], both, both, 1)
    assert exact_reach_avoid(ch, ConstantPolicy(0.0))[0].tolist() == [0.0, 0.0]
    assert enumerate_reach_avoid(ch, ConstantPolicy(0.0), 0) == 0.0


def test_time_varying_target():
    # state 1 is a target only at k = 1; from 0 the chain reaches it at k = 1 w.p. 0.4
    states = [[0.0], [1.0]]
    ch = FiniteChain(states, ControlSet([0.0]), [[[(0, 0.6), (1, 0.4)]], [[(1, 1.0)]]],
                     StateIndexSet(states, lambda k: {1} if k == 1 else set()), StateIndexSet(states, []), 3)
    P = exact_reach_avoid(ch, ConstantPolicy(0.0))
    assert P[0, 0] == pytest.approx(0.4, abs=1e-15)
    assert enumerate_reach_avoid(ch, ConstantPolicy(0.0), 0) == pytest.approx(0.4, abs=1e-15)


def markov_table_policy(chain, table):
    def pol(s, k):
        return chain.controls[table[k, chain.index_of(s)]]
    return pol


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 3), st.integers(0, 4))
def test_recursion_matches_enumeration(seed, n, c, T):
    rng = np.random.default_rng(seed)
    ch = random_chain(rng, GRID, n, c, T)
    table = rng.integers(0, c, size=(max(T, 1), n))
    pol = markov_table_policy(ch, table)
    P = exact_reach_avoid(ch, pol)
    for i in range(n):
        assert P[0, i] == pytest.approx(enumerate_reach_avoid(ch, pol, i), abs=1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 3), st.integers(0, 4))
def test_solver_matches_oracle_fixed(seed, n, c, T):
    rng = np.random.default_rng(seed)
    ch = random_chain(rng, GRID, n, c, T)
    table = rng.integers(0, c, size=(max(T, 1), n))
    pol = markov_table_policy(ch, table)

    def grid_pol(s, k):  # defined on every grid node; off-chain nodes are absorbing
        return pol(s, k) if ch.index_of(s) is not None else ch.controls[0]

    sc = chain_scenario(ch, GRID)
    store = solve_fixed(sc, FunctionPolicy(grid_pol), EXACT)
    P = exact_reach_avoid(ch, pol)
    for k in range(T + 1):
        for i in range(n):
            assert interpolate(store.field(k), ch.states[i]) == pytest.approx(P[k, i], abs=1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 3), st.integers(0, 4))
def test_solver_matches_oracle_optimal(seed, n, c, T):
    rng = np.random.default_rng(seed)
    ch = random_chain(rng, GRID, n, c, T)
    sc = chain_scenario(ch, GRID)
    store = solve_optimal(sc, EXACT)
    P, arg = exact_reach_avoid_max(ch)
    pol = optimal_policy(store, sc, EXACT)
    for k in range(T + 1):
        for i in range(n):
            assert interpolate(store.field(k), ch.states[i]) == pytest.approx(P[k, i], abs=1e-12)
            if k < T:
                assert pol(ch.states[i], k) == ch.controls[arg[k, i]]


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(1, 2), st.integers(1, 2))
def test_optimum_dominates_every_markov_policy(seed, n, c, T):
    rng = np.random.default_rng(seed)
    ch = random_chain(rng, GRID, n, c, T)
    P, _ = exact_reach_avoid_max(ch)
    best = np.zeros(n)
    for pol in all_markov_policies(ch):
        Q = exact_reach_avoid(ch, pol)
        assert np.all(Q[0] <= P[0] + 1e-12)
        best = np.maximum(best, Q[0])
    assert np.allclose(best, P[0], atol=1e-12)
    for i in range(n):
        assert enumerate_policies(ch, i) == pytest.approx(P[0, i], abs=1e-12)


def test_argmax_table():
    # from state 0: control 0 reaches the target w.p. 0.3, control 1 w.p. 0.7
    states = [[0.0], [1.0], [2.0]]
    trans = [[[(1, 0.3), (2, 0.7)], [(1, 0.7), (2, 0.3)]],
             [[(1, 1.0)], [(1, 1.0)]],
             [[(2, 1.0)], [(2, 1.0)]]]
    ch = FiniteChain(states, ControlSet([0.0, 1.0]), trans, StateIndexSet(states, [1]),
                     StateIndexSet(states, []), 1)
    P, arg = exact_reach_avoid_max(ch)
    assert P[0].tolist() == [0.7, 1.0, 0.0]
    assert arg[0].tolist() == [1, 0, 0]  # ties at 1 and 2 keep the first control


def test_chain_scenario_requires_grid_points():
    states = [[0.5, 0.0]]
    ch = FiniteChain(states, ControlSet([0.0]), [[[(0, 1.0)]]], StateIndexSet(states, []),
                     StateIndexSet(states, []), 1)
    with pytest.raises(ValueError):
        chain_scenario(ch, GRID)
