"""Level-set queries over value fields and plane slices for plotting."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .grid import ValueField, interpolate, interpolate_many


@dataclass(frozen=True)
class LevelQuery:
    field: ValueField
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


def member(query: LevelQuery, s) -> bool:
    return interpolate(query.field, s) >= query.gamma


def classify_grid(query: LevelQuery) -> np.ndarray:
    """Membership of every grid point, as a flat mask in grid order."""
    return interpolate_many(query.field, query.field.spec.points()) >= query.gamma


@dataclass(frozen=True)
class Slice:
    axes: tuple[str, str]
    table: np.ndarray  # (rows, 3): coord1, coord2, value

    def __len__(self):
        return len(self.table)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.axes[0]},{self.axes[1]},value\n")
        for a, b, v in self.table:
            buf.write(f"{a:.17g},{b:.17g},{v:.17g}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _axis_position(spec, key) -> int:
    if isinstance(key, (int, np.integer)):
        if not 0 <= key < spec.ndim:
            raise ValueError(f"axis {key} out of range for a {spec.ndim}-axis grid")
        return int(key)
    names = spec.names
    if key not in names:
        raise ValueError(f"unknown axis {key!r}; grid axes are {names}")
    return names.index(key)


def slice_field(fld: ValueField, fixed_axes: Mapping) -> Slice:
    """Interpolated values over the two free axes' grid coordinates.

    ``fixed_axes`` maps axis names (or positions) to coordinates.  Rows are
    row-major in the free axes: the first free axis varies slowest.
    """
    spec = fld.spec
    fixed = {}
    for key, value in fixed_axes.items():
        d = _axis_position(spec, key)
        if d in fixed:
            raise ValueError(f"axis {key!r} fixed twice")
        fixed[d] = float(value)
    free = [d for d in range(spec.ndim) if d not in fixed]
    if len(free) != 2:
        raise ValueError(f"a slice needs exactly two free axes, got {len(free)}")
    a, b = free
    ca = spec.axes[a].coordinates()
    cb = spec.axes[b].coordinates()
    ga, gb = np.meshgrid(ca, cb, indexing="ij")
    pts = np.empty((ga.size, spec.ndim))
    for d, v in fixed.items():
        pts[:, d] = v
    pts[:, a] = ga.ravel()
    pts[:, b] = gb.ravel()
    vals = interpolate_many(fld, pts)
    names = spec.names
    return Slice((names[a], names[b]), np.column_stack([pts[:, a], pts[:, b], vals]))


# exported under the operation's name; ``slice`` shadows the builtin only here
slice = slice_field  # noqa: A001
