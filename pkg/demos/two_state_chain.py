"""
A two-state chain by hand and by solver
=======================================

State 0 moves to the target state 1 with probability 1/2 per step and
stays put otherwise; state 1 is absorbing.  With two steps to go the
chance of reaching the target from state 0 is 1 - (1/2)^2 = 0.75.
"""

from reachprob import (
    ConstantPolicy,
    ControlSet,
    ExpectationEstimator,
    GridSpec,
    empirical_probability,
    solve_fixed,
)
from reachprob.oracle import FiniteChain, StateIndexSet, chain_scenario, enumerate_reach_avoid

states = [[0.0], [1.0]]
chain = FiniteChain(
    states=states,
    controls=ControlSet([0.0]),
    transitions=[[[(0, 0.5), (1, 0.5)]], [[(1, 1.0)]]],
    target=StateIndexSet(states, [1]),
    obstacle=StateIndexSet(states, []),
    horizon=2,
)

# the chain lives on the two nodes of a one-axis grid
scenario = chain_scenario(chain, GridSpec.uniform([(0.0, 1.0)], [2]))
store = solve_fixed(scenario, ConstantPolicy(0.0), ExpectationEstimator.exact())
for k in range(store.horizon, -1, -1):
    print(f"V_{k} =", store.field(k).values)

# summing over all four trajectories gives the same number
print("enumerated:", enumerate_reach_avoid(chain, ConstantPolicy(0.0), start=0))

# and so does rolling the chain forward
print("empirical:", empirical_probability(scenario, ConstantPolicy(0.0), [0.0], 10_000, seed=1))
