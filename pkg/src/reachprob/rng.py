"""Counter-based random streams.

Every random number used by the solver and the simulator is a pure function
of a 64-bit stream key and a 64-bit counter, so results do not depend on
thread scheduling or on the order in which grid points are visited.

The generator is SplitMix64 used in counter mode: the key is offset by
``(counter + 1) * 0x9E3779B97F4A7C15`` and passed through the SplitMix64
finalizer; the top 53 bits give a double in ``[0, 1)``.  Keys are derived
from a seed and up to three integer words by chaining the same finalizer.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1

# reserved third key word: controls that share one disturbance stream
SHARED_SLOT = (1 << 32) - 1
# reserved first key word for forward rollouts (time indices never reach it)
ROLLOUT_TAG = (1 << 63) + 0x524F4C4C


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def key4(seed, a, b, c):
    h = mix64(seed + _GOLDEN)
    h = mix64(h ^ mix64(a + _GOLDEN))
    h = mix64(h ^ mix64(b + _GOLDEN))
    h = mix64(h ^ mix64(c + _GOLDEN))
    return h


@njit(cache=True, inline="always")
def uniform(key, counter):
    z = mix64(key + (counter + _ONE) * _GOLDEN)
    return float(z >> _S11) * _INV53


@njit(cache=True)
def _uniform_block(key, start, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(key, start + np.uint64(i))
    return out


@njit(cache=True)
def _keys_for_points(seed, a, points, c):
    out = np.empty(points.shape[0], dtype=np.uint64)
    for i in range(points.shape[0]):
        out[i] = key4(seed, a, np.uint64(points[i]), c)
    return out


@njit(cache=True)
def _fold_bits(bits):
    h = np.uint64(bits.shape[0])
    for i in range(bits.shape[0]):
        h = mix64(h ^ mix64(bits[i] + _GOLDEN))
    return h


def _u64(x) -> np.uint64:
    return np.uint64(int(x) & MASK64)


def derive_key(seed: int, a: int = 0, b: int = 0, c: int = 0) -> int:
    """Stream key for ``(seed, a, b, c)``; all words are taken modulo 2**64."""
    return int(key4(_u64(seed), _u64(a), _u64(b), _u64(c)))


def derive_keys(seed: int, a: int, points: np.ndarray, c: int) -> np.ndarray:
    """Vectorized :func:`derive_key` over an array of ``b`` words."""
    points = np.ascontiguousarray(points, dtype=np.uint64)
    return _keys_for_points(_u64(seed), _u64(a), points, _u64(c))


def state_word(s) -> int:
    """Deterministic 64-bit word built from the IEEE bits of a state vector.

    Used to key random streams for states that are not grid points, e.g. when
    the optimal policy is evaluated along a simulated trajectory.
    """
    bits = np.ascontiguousarray(s, dtype=np.float64).view(np.uint64)
    return int(_fold_bits(bits))


class Stream:
    """Sequential view of one counter-based stream.

    Quacks like the part of :class:`numpy.random.Generator` the kernels use
    (``random``), so a numpy generator may be passed wherever a ``Stream`` is
    expected when bit-reproducibility across languages is not needed.
    """

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = int(key) & MASK64
        self.counter = int(counter)

    @classmethod
    def from_words(cls, seed: int, a: int = 0, b: int = 0, c: int = 0) -> "Stream":
        return cls(derive_key(seed, a, b, c))

    def random(self, size=None):
        if size is None:
            v = uniform(np.uint64(self.key), np.uint64(self.counter))
            self.counter += 1
            return float(v)
        n = int(np.prod(size))
        out = _uniform_block(np.uint64(self.key), np.uint64(self.counter), n)
        self.counter += n
        return out.reshape(size)

    def spawn(self, a: int, b: int = 0, c: int = 0) -> "Stream":
        """Independent child stream keyed by this stream's key and three words."""
        return Stream.from_words(self.key, a, b, c)

    def __repr__(self) -> str:
        return f"Stream(key=0x{self.key:016x}, counter={self.counter})"
