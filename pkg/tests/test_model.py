import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from reachprob.grid import GridSpec
from reachprob.model import (
    BoxSequence,
    ConstantPolicy,
    ControlSet,
    EmptySet,
    FiniteSupportKernel,
    PredicateSet,
    Scenario,
    SnappedPolicy,
    FunctionPolicy,
    StochasticKernel,
    WholeSpace,
    best_of,
    draw_samples,
    indicator_obstacle_complement,
    indicator_target,
)
from reachprob.rng import Stream, derive_key
from reachprob.vehicle import moving_square_sets

A, B = moving_square_sets()


class Shift(StochasticKernel):
    dimension = 2

    def sample_one(self, s, u, rng):
        return np.asarray(s) + u


def two_point_kernel():
    return FiniteSupportKernel(1, lambda s, u: [((0.0,), 0.5), ((1.0,), 0.5)])


def test_indicator_target_examples():
    box = BoxSequence(lambda k: ([-1, -1], [1, 1]))
    assert indicator_target(box, (0, 0), 0) == 1
    assert indicator_target(box, (5, 5), 0) == 0
    assert indicator_target(A, (2, 0, 1.3), 0) == 1


def test_indicator_obstacle_examples():
    box = BoxSequence(lambda k: ([-1, -1], [1, 1]))
    assert indicator_obstacle_complement(box, (0.5, 0.5), 3) == 0
    assert indicator_obstacle_complement(box, (3, 0), 3) == 1
    assert indicator_obstacle_complement(B, (-2, 0, -2.0), 0) == 0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-4, 4), st.integers(0, 80))
def test_indicator_complementarity(x, y, th, k):
    s = (x, y, th)
    assert indicator_obstacle_complement(B, s, k) == 1 - int(B.contains(s, k))
    assert indicator_target(A, s, k) == int(A.contains(s, k))


def test_contains_many_matches_contains(rng):
    pts = rng.uniform(-4, 4, (500, 3))
    for k in (0, 7, 23):
        many = A.contains_many(pts, k)
        assert many.tolist() == [A.contains(p, k) for p in pts]


def test_draw_samples_deterministic_kernel():
    out = draw_samples(Shift(), (1.0, 2.0), 0.5, Stream(derive_key(1)), 7)
    assert out.shape == (7, 2)
    assert np.all(out == [1.5, 2.5])


def test_draw_samples_seed_determinism():
    k = two_point_kernel()
    a = draw_samples(k, (0.0,), 0, Stream(derive_key(5, 1, 2, 3)), 100)
    b = draw_samples(k, (0.0,), 0, Stream(derive_key(5, 1, 2, 3)), 100)
    assert np.array_equal(a, b)


def test_draw_samples_frequency():
    out = draw_samples(two_point_kernel(), (0.0,), 0, Stream(derive_key(11)), 10_000)
    freq = np.mean(out[:, 0] == 0.0)
    assert 0.47 <= freq <= 0.53


def test_draw_samples_chi_square():
    probs = [0.1, 0.2, 0.3, 0.4]
    kern = FiniteSupportKernel(1, lambda s, u: [((float(i),), p) for i, p in enumerate(probs)])
    out = draw_samples(kern, (0.0,), 0, Stream(derive_key(3)), 20_000)[:, 0].astype(int)
    counts = np.bincount(out, minlength=4)
    assert stats.chisquare(counts, np.array(probs) * len(out)).pvalue > 1e-3


def test_draw_samples_needs_positive_m():
    with pytest.raises(ValueError):
        draw_samples(Shift(), (0, 0), 0, Stream(1), 0)


def test_finite_support_validation():
    bad = FiniteSupportKernel(1, lambda s, u: [((0.0,), 0.5), ((1.0,), 0.4)])
    with pytest.raises(ValueError):
        bad.exact_successors((0.0,), 0)


def test_control_set():
    cs = ControlSet.linspace(-1, 1, 21)
    assert len(cs) == 21 and cs[0] == -1.0 and cs[-1] == 1.0 and cs[10] == 0.0
    with pytest.raises(ValueError):
        ControlSet([])
    with pytest.raises(ValueError):
        ControlSet([0.1, 0.1])
    assert cs.nearest(0.33) == pytest.approx(0.3)


def test_policies():
    assert ConstantPolicy(0.2)((1, 2, 3), 4) == 0.2
    fp = FunctionPolicy(lambda s, k: s[0] * k)
    assert fp((2.0, 0.0), 3) == 6.0
    snapped = SnappedPolicy(FunctionPolicy(lambda s, k: s[0]), ControlSet([-1, 0, 1]))
    assert snapped((0.4, 0), 0) == 0.0
    assert snapped.evaluate_many(np.array([[0.6, 0], [-5, 0]]), 0).tolist() == [1.0, -1.0]


def test_best_of_tie_break():
    best, arg = best_of(np.array([[0.3, 0.7], [0.5, 0.5], [0.0, 0.0]]))
    assert best.tolist() == [0.7, 0.5, 0.0]
    assert arg.tolist() == [1, 0, 0]


def test_simple_sets():
    pts = np.zeros((3, 2))
    assert not EmptySet().contains_many(pts, 0).any()
    assert WholeSpace().contains_many(pts, 0).all()
    ps = PredicateSet(lambda s, k: s[0] > k)
    assert ps.contains((2, 0), 1) and not ps.contains((1, 0), 1)


def test_scenario_invariants():
    grid = GridSpec.uniform([(0, 1), (0, 1)], [3, 3])
    ok = dict(kernel=Shift(), target=EmptySet(), obstacle=EmptySet(), controls=[0.0],
              horizon=3, gamma=0.5, samples=10, grid=grid)
    Scenario(**ok)
    for bad in ({"horizon": -1}, {"gamma": 1.5}, {"samples": 0},
                {"grid": GridSpec.uniform([(0, 1)], [3])}):
        with pytest.raises(ValueError):
            Scenario(**{**ok, **bad})


def test_moving_boxes_closed():
    lo, hi = A.bounds(0)
    assert lo[0] == 1.5 and hi[0] == 2.5 and lo[1] == -0.5 and hi[1] == 0.5
    assert math.isinf(lo[2]) and math.isinf(hi[2])
    assert A.contains((2.5, 0.5, 0.0), 0)
