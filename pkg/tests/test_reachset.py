import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reachprob.grid import AxisSpec, GridSpec, ValueField
from reachprob.reachset import LevelQuery, classify_grid, member, slice_field


def grid3(n=5):
    return GridSpec([AxisSpec(0, 4, n, name="x"), AxisSpec(0, 4, n, name="y"),
                     AxisSpec(-np.pi, np.pi, n, periodic=True, name="theta")])


def linear_field(spec):
    pts = spec.points()
    vals = np.clip(pts[:, 0] / 4.0, 0, 1)
    return ValueField(spec, 0, vals)


def test_member_threshold_inclusive():
    f = ValueField(GridSpec.uniform([(0.0, 1.0)], [2]), 0, [0.5, 0.5])
    assert member(LevelQuery(f, 0.5), (0.3,))
    assert not member(LevelQuery(f, 0.5000001), (0.3,))


def test_gamma_bounds():
    f = ValueField(GridSpec.uniform([(0.0, 1.0)], [2]), 0, [0.0, 1.0])
    for g in (-0.1, 1.1):
        with pytest.raises(ValueError):
            LevelQuery(f, g)


def test_extreme_gammas():
    f = linear_field(grid3())
    assert classify_grid(LevelQuery(f, 0.0)).all()
    assert classify_grid(LevelQuery(f, 1.0)).sum() == 25  # x = 4 plane only


@given(st.floats(0, 1), st.floats(0, 1))
def test_monotone_in_gamma(g1, g2):
    lo, hi = sorted((g1, g2))
    f = linear_field(grid3())
    a = classify_grid(LevelQuery(f, hi))
    b = classify_grid(LevelQuery(f, lo))
    assert np.all(~a | b)


def test_slice_shape_and_order():
    spec = grid3()
    sl = slice_field(linear_field(spec), {"theta": 0.0})
    assert sl.axes == ("x", "y")
    assert len(sl) == 25
    assert sl.table[:5, 0].tolist() == [0.0] * 5  # first free axis varies slowest
    assert sl.table[:5, 1].tolist() == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert np.allclose(sl.table[:, 2], sl.table[:, 0] / 4)


def test_slice_csv_round_trip(tmp_path):
    sl = slice_field(linear_field(grid3()), {"y": 1.5})
    path = tmp_path / "s.csv"
    sl.write_csv(path)
    rows = list(csv.reader(io.StringIO(path.read_text())))
    assert rows[0] == ["x", "theta", "value"]
    back = np.array(rows[1:], dtype=float)
    assert back.tobytes() == sl.table.tobytes()


def test_slice_by_position():
    f = linear_field(grid3())
    assert slice_field(f, {2: 0.0}).table.tobytes() == slice_field(f, {"theta": 0.0}).table.tobytes()


@pytest.mark.parametrize("fixed", [{}, {"x": 1, "y": 1}, {"z": 0.0}, {"theta": 0.0, 2: 0.0}, {5: 0.0}])
def test_slice_errors(fixed):
    with pytest.raises(ValueError):
        slice_field(linear_field(grid3()), fixed)


def test_slice_interpolates_off_grid_fix():
    spec = grid3()
    vals = np.tile(np.linspace(0, 1, 5), 25)  # varies with theta only
    f = ValueField(spec, 0, vals)
    sl = slice_field(f, {"theta": -np.pi + np.pi / 4})  # halfway between theta nodes 0 and 1
    assert np.allclose(sl.table[:, 2], 0.125)
