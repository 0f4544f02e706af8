"""Vectorized numpy implementation of the sliding repetition metric.

Serves as the import-time fallback when the compiled kernel is unavailable
and as the reference for backend-equivalence tests.
"""

from __future__ import annotations

import numpy as np


def _box_sum(x: np.ndarray, width: int) -> np.ndarray:
    """Sliding window sums: out[n] = sum(x[n : n+width])."""
    c = np.concatenate([np.zeros(1, dtype=x.dtype), np.cumsum(x)])
    return c[width:] - c[:-width]


def sliding_metric(y: np.ndarray, half_len: int):
    """Repetition correlation over all window starts.

    Returns (p, r, m) with
      p[n] = sum_{l<L} y[n+l] * conj(y[n+l+L])
      r[n] = 0.5 * (sum_{l<L} |y[n+l]|^2 + sum_{l<L} |y[n+l+L]|^2)
      m[n] = (|p[n]| / r[n])^2   (0 where r vanishes)
    for n in [0, len(y) - 2L].
    """
    y = np.ascontiguousarray(y, dtype=np.complex128)
    L = int(half_len)
    n_out = len(y) - 2 * L + 1
    if L < 1 or n_out < 1:
        raise ValueError("capture shorter than two repetition halves")
    z = y[: len(y) - L] * np.conj(y[L:])
    p = _box_sum(z, L)[:n_out]
    e = _box_sum(np.abs(y) ** 2, L)
    r = 0.5 * (e[:n_out] + e[L : L + n_out])
    m = np.zeros(n_out, dtype=np.float64)
    ok = r > 0.0
    # ratio before squaring: |p|^2 and r^2 can underflow for
    # subnormal-scale inputs while |p|/r stays O(1)
    m[ok] = (np.abs(p[ok]) / r[ok]) ** 2
    return p, r, m


def sliding_metric_direct(y: np.ndarray, half_len: int):
    """O(n*L) per-window summation. Test oracle only."""
    y = np.asarray(y, dtype=np.complex128)
    L = int(half_len)
    n_out = len(y) - 2 * L + 1
    p = np.empty(n_out, dtype=np.complex128)
    r = np.empty(n_out, dtype=np.float64)
    for n in range(n_out):
        a = y[n : n + L]
        b = y[n + L : n + 2 * L]
        p[n] = np.sum(a * np.conj(b))
        r[n] = 0.5 * (np.sum(np.abs(a) ** 2) + np.sum(np.abs(b) ** 2))
    m = np.where(r > 0.0, (np.abs(p) / np.maximum(r, 1e-300)) ** 2, 0.0)
    return p, r, m
