"""Independent reference implementations shared by the test modules."""

import math

import numpy as np


def ref_field(s, u, v=1.0):
    x, y, th = s
    return np.array([v * math.cos(th) - y - 0.1 * y**3, v * math.sin(th) + x + 0.1 * x**3, u])


def ref_integrate(s, u, dt, h=1e-4):
    """Classical RK4 with a fine step; no wrapping."""
    s = np.array(s, dtype=float)
    n = round(dt / h)
    for _ in range(n):
        k1 = ref_field(s, u)
        k2 = ref_field(s + h / 2 * k1, u)
        k3 = ref_field(s + h / 2 * k2, u)
        k4 = ref_field(s + h * k3, u)
        s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return s


def five_case_atan2(dy, dx):
    """The five cases as printed, with (0, 0) mapped to 0."""
    if dx > 0:
        return math.atan(dy / dx)
    if dx < 0 and dy >= 0:
        return math.atan(dy / dx) + math.pi
    if dx < 0 and dy < 0:
        return math.atan(dy / dx) - math.pi
    if dx == 0 and dy > 0:
        return math.pi / 2
    if dx == 0 and dy < 0:
        return -math.pi / 2
    return 0.0
