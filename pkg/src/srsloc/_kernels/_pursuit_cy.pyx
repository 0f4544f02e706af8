# cython: boundscheck=False, wraparound=False, cdivision=True
"""Tone-dictionary primitives for the matching-pursuit inner loop.

Same contracts as srsloc._kernels.pursuit_np. Tone phasors advance by a
recursive rotation refreshed from libm every REFRESH samples, which keeps
the drift against the exact per-element exponential below ~1e-14 for any
supported spectrum length.
"""

import numpy as np

cimport cython
from libc.math cimport cos, sin

DEF REFRESH = 64
cdef double TWO_PI = 6.283185307179586476925286766559


cdef inline double complex _phasor(double ph) noexcept:
    return cos(ph) + 1j * sin(ph)


def add_tone(x, double f, double complex amp):
    """In-place x += amp * exp(2j*pi*f*m)."""
    cdef double complex[::1] xv = x
    cdef Py_ssize_t n = xv.shape[0], i
    cdef double complex rot = _phasor(TWO_PI * f)
    cdef double complex e = 1.0 + 0j
    for i in range(n):
        if i and i % REFRESH == 0:
            e = _phasor(TWO_PI * f * i)
        xv[i] = xv[i] + amp * e
        e = e * rot


def project(x, double f):
    """Least-squares amplitude of a unit tone at frequency f."""
    cdef double complex[::1] xv = x
    cdef Py_ssize_t n = xv.shape[0], i
    cdef double complex rot = _phasor(-TWO_PI * f)
    cdef double complex e = 1.0 + 0j
    cdef double complex acc = 0
    for i in range(n):
        if i and i % REFRESH == 0:
            e = _phasor(-TWO_PI * f * i)
        acc = acc + xv[i] * e
        e = e * rot
    return complex(acc.real / n, acc.imag / n)


def mean_power(x):
    """Mean of |x|^2."""
    cdef double complex[::1] xv = x
    cdef Py_ssize_t n = xv.shape[0], i
    cdef double acc = 0
    for i in range(n):
        acc += xv[i].real * xv[i].real + xv[i].imag * xv[i].imag
    return acc / n


def newton_refine(x, double f, int iters, double max_step):
    """Newton polish of a tone frequency on the projection power |J(f)|^2."""
    cdef double complex[::1] xv = x
    cdef Py_ssize_t n = xv.shape[0], i
    cdef int it
    cdef double complex e, rot, xe, j0, s1, s2, j1, j2
    cdef double g1, g2, step
    for it in range(iters):
        rot = _phasor(-TWO_PI * f)
        e = 1.0 + 0j
        j0 = 0
        s1 = 0
        s2 = 0
        for i in range(n):
            if i and i % REFRESH == 0:
                e = _phasor(-TWO_PI * f * i)
            xe = xv[i] * e
            j0 = j0 + xe
            s1 = s1 + i * xe
            s2 = s2 + (<double> i * i) * xe
            e = e * rot
        # d/df exp(-2j*pi*f*m) pulls down -2j*pi*m per derivative order
        j1 = (-TWO_PI * 1j) * s1
        j2 = (-TWO_PI * TWO_PI) * s2
        g1 = 2.0 * (j0.conjugate() * j1).real
        g2 = 2.0 * (
            j1.real * j1.real + j1.imag * j1.imag + (j0.conjugate() * j2).real
        )
        if g2 >= 0.0:
            break
        step = -g1 / g2
        if step > max_step:
            step = max_step
        elif step < -max_step:
            step = -max_step
        f = (f + step) % 1.0
        if f < 0.0:
            f += 1.0
        if step < 1e-15 and step > -1e-15:
            break
    return f
