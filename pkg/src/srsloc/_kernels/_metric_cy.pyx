# cython: boundscheck=False, wraparound=False, cdivision=True
"""Streaming sliding-window repetition metric.

Windows are evaluated tile by tile from per-tile prefix sums. Within a
tile, sliding over exact-zero samples leaves the prefix accumulator
bit-identical, so r and p return to exact zero once the signal has left
both half windows — a rolling add/subtract accumulator instead keeps
O(eps) residue there and emits meaningless ratios near 1 over silence.
Fresh prefixes per tile also bound float drift on multi-second captures.
"""

import numpy as np

cimport cython
from libc.math cimport hypot

DEF TILE = 4096


def sliding_metric(y, int half_len):
    """Same contract as srsloc._kernels.metric_np.sliding_metric."""
    cdef double complex[::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    cdef Py_ssize_t L = half_len
    cdef Py_ssize_t n_total = yv.shape[0]
    cdef Py_ssize_t n_out = n_total - 2 * L + 1
    if L < 1 or n_out < 1:
        raise ValueError("capture shorter than two repetition halves")

    p_arr = np.empty(n_out, dtype=np.complex128)
    r_arr = np.empty(n_out, dtype=np.float64)
    m_arr = np.empty(n_out, dtype=np.float64)
    cdef double complex[::1] p = p_arr
    cdef double[::1] r = r_arr
    cdef double[::1] m = m_arr

    cz_arr = np.empty(TILE + 2 * L + 1, dtype=np.complex128)
    ce_arr = np.empty(TILE + 2 * L + 1, dtype=np.float64)
    cdef double complex[::1] cz = cz_arr
    cdef double[::1] ce = ce_arr

    cdef Py_ssize_t t0 = 0, tn, i, n, k
    cdef double complex pv
    cdef double rv, pm, re, im

    while t0 < n_out:
        tn = n_out - t0
        if tn > TILE:
            tn = TILE
        cz[0] = 0
        ce[0] = 0
        for k in range(tn - 1 + 2 * L):
            i = t0 + k
            re = yv[i].real
            im = yv[i].imag
            ce[k + 1] = ce[k] + re * re + im * im
            if k < tn - 1 + L:
                cz[k + 1] = cz[k] + yv[i] * yv[i + L].conjugate()
        for k in range(tn):
            n = t0 + k
            pv = cz[k + L] - cz[k]
            rv = 0.5 * (ce[k + 2 * L] - ce[k])
            p[n] = pv
            r[n] = rv
            if rv > 0:
                # ratio before squaring: |p|^2 and r^2 can underflow for
                # subnormal-scale inputs while |p|/r stays O(1)
                pm = hypot(pv.real, pv.imag) / rv
                m[n] = pm * pm
            else:
                m[n] = 0.0
        t0 += tn

    return p_arr, r_arr, m_arr
