"""Cartesian grids, multilinear interpolation and value-field storage.

A :class:`GridSpec` is a box discretized with ``count`` equally spaced nodes
per axis (both end points included).  Values are stored flat in row-major
order with the last axis varying fastest.

Interpolation conventions:

* non-periodic axes clamp the query coordinate to ``[lower, upper]``;
* periodic axes wrap coordinates outside ``[lower, upper]`` modulo
  ``upper - lower``.  Both end nodes exist, so the last cell joins the two
  copies of the seam; a query exactly on ``upper`` reads the upper node.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import ContractError, FormatError

MAGIC = b"VFLD"
FORMAT_VERSION = 1
_NODE_SNAP = 1e-9


@dataclass(frozen=True)
class AxisSpec:
    lower: float
    upper: float
    count: int
    periodic: bool = False
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "periodic", bool(self.periodic))
        if not np.isfinite(self.lower) or not np.isfinite(self.upper):
            raise ValueError("axis bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"axis lower {self.lower} must be < upper {self.upper}")
        if self.count < 2:
            raise ValueError(f"axis count must be >= 2, got {self.count}")

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.count - 1)

    def coordinates(self) -> np.ndarray:
        return self.lower + np.arange(self.count) * self.spacing


class GridSpec:
    """Rectangular domain discretized into a Cartesian grid."""

    def __init__(self, axes: Sequence[AxisSpec]):
        axes = tuple(axes)
        if not axes:
            raise ValueError("a grid needs at least one axis")
        self.axes = axes
        self.ndim = len(axes)
        self.shape = tuple(a.count for a in axes)
        self.size = int(np.prod(self.shape))
        self.lowers = np.array([a.lower for a in axes])
        self.uppers = np.array([a.upper for a in axes])
        self.counts = np.array(self.shape, dtype=np.int64)
        self.periodic = np.array([a.periodic for a in axes], dtype=np.bool_)
        self.spacing = np.array([a.spacing for a in axes])
        strides = np.ones(self.ndim, dtype=np.int64)
        for d in range(self.ndim - 2, -1, -1):
            strides[d] = strides[d + 1] * self.shape[d + 1]
        self.strides = strides
        self.scales = (self.counts - 1) / (self.uppers - self.lowers)
        self._points = None

    @classmethod
    def uniform(cls, bounds, counts, periodic=None, names=None) -> "GridSpec":
        """Build from ``[(lower, upper), ...]`` and per-axis counts."""
        n = len(bounds)
        periodic = periodic if periodic is not None else [False] * n
        names = names if names is not None else [""] * n
        return cls(
            AxisSpec(lo, hi, c, p, nm)
            for (lo, hi), c, p, nm in zip(bounds, counts, periodic, names)
        )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def __eq__(self, other):
        return isinstance(other, GridSpec) and self.axes == other.axes

    def __hash__(self):
        return hash(self.axes)

    def __repr__(self):
        parts = ", ".join(
            f"[{a.lower:g},{a.upper:g}]x{a.count}{'p' if a.periodic else ''}"
            for a in self.axes
        )
        return f"GridSpec({parts})"

    def flat_index(self, index) -> int:
        index = np.asarray(index, dtype=np.int64)
        return int(np.dot(index, self.strides))

    def unravel(self, flat) -> np.ndarray:
        return np.array(np.unravel_index(flat, self.shape)).T

    def points(self) -> np.ndarray:
        """All grid points as a read-only ``(size, ndim)`` array."""
        if self._points is None:
            idx = np.indices(self.shape).reshape(self.ndim, -1).T
            pts = self.lowers + idx * self.spacing
            pts.setflags(write=False)
            self._points = pts
        return self._points

    def seam_duplicates(self) -> np.ndarray:
        """Mask of nodes on the upper end of a periodic axis.

        These nodes repeat the state on the lower end; solvers compute the lower
        copy and mirror it.
        """
        mask = np.zeros(self.shape, dtype=bool)
        for d, a in enumerate(self.axes):
            if a.periodic:
                sl = [slice(None)] * self.ndim
                sl[d] = a.count - 1
                mask[tuple(sl)] = True
        return mask.ravel()

    def mirror_seams(self, values: np.ndarray) -> None:
        """Copy lower-end planes onto upper-end planes of periodic axes, in place."""
        arr = values.reshape(self.shape)
        for d, a in enumerate(self.axes):
            if a.periodic:
                hi = [slice(None)] * self.ndim
                lo = [slice(None)] * self.ndim
                hi[d] = a.count - 1
                lo[d] = 0
                arr[tuple(hi)] = arr[tuple(lo)]

    def packed(self):
        """Arrays consumed by the compiled interpolation kernels."""
        return self.lowers, self.uppers, self.counts, self.periodic, self.strides, self.scales


class ValueField:
    """Values of one ``V_k`` at every node of a grid; immutable."""

    __slots__ = ("spec", "time_index", "values")

    def __init__(self, spec: GridSpec, time_index: int, values, check: bool = True):
        values = np.array(values, dtype=np.float64).ravel()
        if values.shape[0] != spec.size:
            raise ValueError(
                f"expected {spec.size} values for {spec!r}, got {values.shape[0]}"
            )
        if check and values.size and not (values.min() >= 0.0 and values.max() <= 1.0):
            raise ValueError("field values must lie in [0, 1]")
        values.setflags(write=False)
        self.spec = spec
        self.time_index = int(time_index)
        self.values = values

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.spec.shape)

    def __call__(self, s):
        return interpolate(self, s)

    def __repr__(self):
        return f"ValueField(k={self.time_index}, {self.spec!r})"


# ---------------------------------------------------------------------------
# interpolation kernels


@njit(cache=True, inline="always")
def locate(c, lo, hi, cnt, per, scale):
    """Cell index and fractional offset of coordinate ``c`` on one axis.

    ``scale`` is ``(cnt - 1) / (hi - lo)``.
    """
    t = (c - lo) * scale
    top = cnt - 1
    if per:
        if t < -_NODE_SNAP or t > top + _NODE_SNAP:
            t = ((c - lo) % (hi - lo)) * scale
    elif t < 0.0:
        t = 0.0
    elif t > top:
        t = float(top)
    r = np.floor(t + 0.5)
    if abs(t - r) < _NODE_SNAP:
        t = r
    i = int(np.floor(t))
    if i > cnt - 2:
        i = cnt - 2
    elif i < 0:
        i = 0
    f = t - i
    if f < 0.0:
        f = 0.0
    elif f > 1.0:
        f = 1.0
    return i, f


@njit(cache=True)
def interp_nd(values, lowers, uppers, counts, periodic, strides, scales, s, buf):
    """Multilinear interpolation at one point.

    Corners are reduced last axis first with ``(1 - f) * a + f * b``; the
    result is clamped to the corner range so rounding never leaves it.
    ``buf`` needs ``2**ndim`` slots.
    """
    n = s.shape[0]
    base = 0
    fr = np.empty(n)
    for d in range(n):
        i, f = locate(s[d], lowers[d], uppers[d], counts[d], periodic[d], scales[d])
        base += i * strides[d]
        fr[d] = f
    ncorner = 1 << n
    vmin = 1e300
    vmax = -1e300
    for c in range(ncorner):
        off = 0
        for d in range(n):
            if (c >> (n - 1 - d)) & 1:
                off += strides[d]
        v = values[base + off]
        buf[c] = v
        if v < vmin:
            vmin = v
        if v > vmax:
            vmax = v
    size = ncorner
    for d in range(n - 1, -1, -1):
        f = fr[d]
        g = 1.0 - f
        size >>= 1
        for j in range(size):
            buf[j] = g * buf[2 * j] + f * buf[2 * j + 1]
    out = buf[0]
    if out < vmin:
        out = vmin
    elif out > vmax:
        out = vmax
    return out


@njit(cache=True, inline="always")
def interp3_z(values, lowers, uppers, counts, periodic, strides, scales, x, y, i2, f2):
    """Trilinear interpolation with the last-axis cell ``(i2, f2)`` already located.

    Same operation order as :func:`interp_nd`.
    """
    i0, f0 = locate(x, lowers[0], uppers[0], counts[0], periodic[0], scales[0])
    i1, f1 = locate(y, lowers[1], uppers[1], counts[1], periodic[1], scales[1])
    s0 = strides[0]
    s1 = strides[1]
    s2 = strides[2]
    b = i0 * s0 + i1 * s1 + i2 * s2
    v000 = values[b]
    v001 = values[b + s2]
    v010 = values[b + s1]
    v011 = values[b + s1 + s2]
    v100 = values[b + s0]
    v101 = values[b + s0 + s2]
    v110 = values[b + s0 + s1]
    v111 = values[b + s0 + s1 + s2]
    vmin = min(min(min(v000, v001), min(v010, v011)), min(min(v100, v101), min(v110, v111)))
    vmax = max(max(max(v000, v001), max(v010, v011)), max(max(v100, v101), max(v110, v111)))
    g2 = 1.0 - f2
    a00 = g2 * v000 + f2 * v001
    a01 = g2 * v010 + f2 * v011
    a10 = g2 * v100 + f2 * v101
    a11 = g2 * v110 + f2 * v111
    g1 = 1.0 - f1
    b0 = g1 * a00 + f1 * a01
    b1 = g1 * a10 + f1 * a11
    out = (1.0 - f0) * b0 + f0 * b1
    if out < vmin:
        out = vmin
    elif out > vmax:
        out = vmax
    return out


@njit(cache=True, inline="always")
def interp3(values, lowers, uppers, counts, periodic, strides, scales, x, y, z):
    i2, f2 = locate(z, lowers[2], uppers[2], counts[2], periodic[2], scales[2])
    return interp3_z(values, lowers, uppers, counts, periodic, strides, scales, x, y, i2, f2)


@njit(cache=True)
def _interp_many(values, lowers, uppers, counts, periodic, strides, scales, pts):
    n = pts.shape[1]
    out = np.empty(pts.shape[0])
    if n == 3:
        for k in range(pts.shape[0]):
            out[k] = interp3(
                values, lowers, uppers, counts, periodic, strides, scales,
                pts[k, 0], pts[k, 1], pts[k, 2],
            )
    else:
        buf = np.empty(1 << n)
        for k in range(pts.shape[0]):
            out[k] = interp_nd(values, lowers, uppers, counts, periodic, strides, scales, pts[k], buf)
    return out


def interpolate_many(field: ValueField, states) -> np.ndarray:
    """Interpolate ``field`` at each row of an ``(N, ndim)`` array."""
    pts = np.ascontiguousarray(states, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != field.spec.ndim:
        raise ValueError(
            f"states must have shape (N, {field.spec.ndim}), got {pts.shape}"
        )
    return _interp_many(field.values, *field.spec.packed(), pts)


def interpolate(field: ValueField, s) -> float:
    """Multilinear interpolation of ``field`` at state ``s``."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (field.spec.ndim,):
        raise ValueError(
            f"state has shape {s.shape}, grid has {field.spec.ndim} dimensions"
        )
    return float(interpolate_many(field, s[None, :])[0])


# ---------------------------------------------------------------------------


def point_of_index(spec: GridSpec, index) -> np.ndarray:
    index = np.atleast_1d(np.asarray(index))
    if index.shape != (spec.ndim,):
        raise IndexError(f"index {tuple(index)} does not match {spec.ndim} axes")
    if np.any(index < 0) or np.any(index >= spec.counts):
        raise IndexError(f"index {tuple(index)} out of range for shape {spec.shape}")
    return spec.lowers + index * spec.spacing


def fill(spec: GridSpec, f: Callable[[np.ndarray], float], time_index: int = 0) -> ValueField:
    """Evaluate ``f`` at every grid point."""
    pts = spec.points()
    values = np.empty(spec.size)
    for i in range(spec.size):
        v = float(f(pts[i]))
        if not 0.0 <= v <= 1.0:
            raise ContractError(f"f returned {v} at {pts[i]}, outside [0, 1]")
        values[i] = v
    return ValueField(spec, time_index, values, check=False)


# ---------------------------------------------------------------------------
# binary persistence

_HEAD = struct.Struct("<4sII")
_AXIS = struct.Struct("<ddQB")
_TIME = struct.Struct("<Q")


def encode_field(fld: ValueField) -> bytes:
    parts = [_HEAD.pack(MAGIC, FORMAT_VERSION, fld.spec.ndim)]
    for a in fld.spec.axes:
        parts.append(_AXIS.pack(a.lower, a.upper, a.count, 1 if a.periodic else 0))
    parts.append(_TIME.pack(fld.time_index))
    parts.append(fld.values.astype("<f8", copy=False).tobytes())
    return b"".join(parts)


def decode_field(buf: bytes) -> ValueField:
    if len(buf) < _HEAD.size:
        raise FormatError("file too short for header")
    magic, version, ndim = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if ndim < 1:
        raise FormatError("field must have at least one axis")
    off = _HEAD.size
    if len(buf) < off + ndim * _AXIS.size + _TIME.size:
        raise FormatError("truncated axis table")
    axes = []
    for _ in range(ndim):
        lo, hi, cnt, per = _AXIS.unpack_from(buf, off)
        off += _AXIS.size
        if per not in (0, 1):
            raise FormatError(f"periodic flag must be 0 or 1, got {per}")
        try:
            axes.append(AxisSpec(lo, hi, cnt, bool(per)))
        except ValueError as exc:
            raise FormatError(str(exc)) from None
    (time_index,) = _TIME.unpack_from(buf, off)
    off += _TIME.size
    spec = GridSpec(axes)
    payload = len(buf) - off
    if payload != 8 * spec.size:
        raise FormatError(
            f"payload holds {payload} bytes, header declares {spec.size} values"
        )
    values = np.frombuffer(buf, dtype="<f8", count=spec.size, offset=off)
    try:
        return ValueField(spec, time_index, values)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def write_field(fld: ValueField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_field(fld))


def read_field(path) -> ValueField:
    with open(path, "rb") as fh:
        return decode_field(fh.read())
