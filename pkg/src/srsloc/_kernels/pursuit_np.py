"""Tone-dictionary primitives, numpy implementation.

These four functions form the inner loop of the matching-pursuit tone
extractor. The arrays involved are short (one despread spectrum), so the
compiled twin exists mainly to remove per-call numpy overhead rather than
to exploit vector width.
"""

from __future__ import annotations

import numpy as np


def add_tone(x: np.ndarray, f: float, amp: complex) -> None:
    """In-place x += amp * exp(2j*pi*f*m) for m = 0..len(x)-1."""
    m = np.arange(len(x))
    x += amp * np.exp(2j * np.pi * f * m)


def project(x: np.ndarray, f: float) -> complex:
    """Least-squares amplitude of a unit tone at frequency f."""
    m = np.arange(len(x))
    return complex(np.mean(x * np.exp(-2j * np.pi * f * m)))


def mean_power(x: np.ndarray) -> float:
    """Mean of |x|^2."""
    return float(np.mean(np.abs(x) ** 2))


def newton_refine(x: np.ndarray, f: float, iters: int, max_step: float) -> float:
    """Newton polish of a tone frequency on the projection power |J(f)|^2.

    J(f) = sum_m x[m] exp(-2j*pi*f*m); steps are clamped to max_step and the
    iteration stops early on a non-concave point or a sub-1e-15 step.
    """
    m = np.arange(len(x))
    w = -2j * np.pi * m
    xw = x * w
    xww = xw * w
    for _ in range(iters):
        e = np.exp(-2j * np.pi * f * m)
        j0 = complex(np.dot(x, e))
        j1 = complex(np.dot(xw, e))
        j2 = complex(np.dot(xww, e))
        g1 = 2.0 * (j0.conjugate() * j1).real
        g2 = 2.0 * (abs(j1) ** 2 + (j0.conjugate() * j2).real)
        if g2 >= 0.0:
            break
        step = -g1 / g2
        if step > max_step:
            step = max_step
        elif step < -max_step:
            step = -max_step
        f = (f + step) % 1.0
        if abs(step) < 1e-15:
            break
    return float(f)
