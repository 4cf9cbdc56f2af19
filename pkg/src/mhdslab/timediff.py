"""Backward finite differences in time over a uniformly spaced state history."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import HistoryError

__all__ = ["fornberg_weights", "backward_weights", "backward_derivative"]


def fornberg_weights(x0, xs, m):
    """Weights of the order-``m`` derivative at ``x0`` from samples at ``xs``.

    Fornberg's recursion (Math. Comp. 51, 1988).
    """
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    if m >= n:
        raise ValueError("need more points than the derivative order")
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@lru_cache(maxsize=None)
def _unit_weights(m, accuracy):
    pts = -np.arange(m + accuracy, dtype=float)
    return tuple(fornberg_weights(0.0, pts, m))


def backward_weights(m, accuracy, dt):
    """Weights for ``d^m/dt^m`` at the newest sample, newest first."""
    if m == 0:
        return np.array([1.0])
    return np.asarray(_unit_weights(m, accuracy)) / dt ** m


def backward_derivative(samples, m, accuracy, dt):
    """``d^m/dt^m`` at the newest of ``samples`` (ordered oldest to newest)."""
    need = m + accuracy if m else 1
    if len(samples) < need:
        raise HistoryError(f"derivative of order {m} needs {need} states, got {len(samples)}")
    w = backward_weights(m, accuracy, dt)
    recent = samples[::-1][:need]
    out = w[0] * recent[0]
    for wi, s in zip(w[1:], recent[1:]):
        out = out + wi * s
    return out
