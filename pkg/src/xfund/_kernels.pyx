# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sweeps for the nonlinear one-step solvers.

Same flat packed-level layout and arithmetic as the reference module; see
_kernels_py for the layout notes and formula derivations.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _off(Py_ssize_t k) nogil:
    return k * (k + 1) // 2


cdef inline double _fmax(double a, double b) nogil:
    return a if a > b else b


def level_offset(k):
    return int(k) * (int(k) + 1) // 2


def pn_backward_1d(
    double[::1] v_term,
    double[::1] prices,
    double[::1] flows,
    double[::1] fl,
    double[::1] fb,
    double[::1] fib,
    double[::1] adiv,
):
    cdef Py_ssize_t n = fl.shape[0]
    v_arr = np.empty(_off(n + 1))
    z_arr = np.empty(_off(n))
    cdef double[::1] v = v_arr
    cdef double[::1] z = z_arr
    cdef Py_ssize_t k, j, o0, o1
    cdef double pu, pd, zk, r, s_pos, sp, sm, rp, w
    for j in range(n + 1):
        v[_off(n) + j] = v_term[j]
    with nogil:
        for k in range(n - 1, -1, -1):
            o0 = _off(k)
            o1 = _off(k + 1)
            for j in range(k + 1):
                pu = v[o1 + j + 1] - flows[o1 + j + 1]
                pd = v[o1 + j] - flows[o1 + j]
                zk = (pu - pd) / (prices[o1 + j + 1] - prices[o1 + j])
                r = pd - zk * (prices[o1 + j] - prices[o0 + j] + adiv[k] * prices[o0 + j])
                s_pos = zk * prices[o0 + j]
                sp = _fmax(s_pos, 0.0)
                sm = _fmax(-s_pos, 0.0)
                rp = r + sm + sp * (fib[k] - 1.0)
                if rp >= 0.0:
                    w = rp / fl[k]
                else:
                    w = rp / fb[k]
                v[o0 + j] = w - sm
                z[o0 + j] = zk
    return v_arr, z_arr


def pn_forward_1d(
    double v0,
    double[::1] z,
    double[::1] prices,
    double[::1] flows,
    double[::1] fl,
    double[::1] fb,
    double[::1] fib,
    double[::1] adiv,
):
    cdef Py_ssize_t n = fl.shape[0]
    v_arr = np.empty(_off(n + 1))
    cdef double[::1] v = v_arr
    cdef Py_ssize_t k, j, o0, o1
    cdef double zk, s_pos, sp, sm, w, base, down, up, gap
    cdef double mismatch = 0.0
    cdef double up_prev
    v[0] = v0
    with nogil:
        for k in range(n):
            o0 = _off(k)
            o1 = _off(k + 1)
            up_prev = 0.0
            for j in range(k + 1):
                zk = z[o0 + j]
                s_pos = zk * prices[o0 + j]
                sp = _fmax(s_pos, 0.0)
                sm = _fmax(-s_pos, 0.0)
                w = v[o0 + j] + sm
                base = _fmax(w, 0.0) * fl[k] - _fmax(-w, 0.0) * fb[k] - sm - sp * (fib[k] - 1.0)
                down = base + zk * (prices[o1 + j] - prices[o0 + j] + adiv[k] * prices[o0 + j])
                up = base + zk * (prices[o1 + j + 1] - prices[o0 + j] + adiv[k] * prices[o0 + j])
                if j:
                    gap = up_prev - down
                    if gap < 0.0:
                        gap = -gap
                    if gap > mismatch:
                        mismatch = gap
                v[o1 + j] = down + flows[o1 + j]
                up_prev = up
            v[o1 + k + 1] = up_prev + flows[o1 + k + 1]
    return v_arr, mismatch


def endo_backward_1d(
    double[::1] y_term,
    double[::1] prices,
    double[::1] q,
    double[::1] disc_pos,
    double[::1] disc_neg,
):
    cdef Py_ssize_t n = q.shape[0]
    y_arr = np.empty(_off(n + 1))
    z_arr = np.empty(_off(n))
    cdef double[::1] y = y_arr
    cdef double[::1] z = z_arr
    cdef Py_ssize_t k, j, o0, o1
    cdef double e
    for j in range(n + 1):
        y[_off(n) + j] = y_term[j]
    with nogil:
        for k in range(n - 1, -1, -1):
            o0 = _off(k)
            o1 = _off(k + 1)
            for j in range(k + 1):
                e = q[k] * y[o1 + j + 1] + (1.0 - q[k]) * y[o1 + j]
                if e > 0.0:
                    y[o0 + j] = disc_pos[k] * e
                else:
                    y[o0 + j] = disc_neg[k] * e
                z[o0 + j] = (y[o1 + j + 1] - y[o1 + j]) / (prices[o1 + j + 1] - prices[o1 + j])
    return y_arr, z_arr


def endo_forward_1d(
    double y0,
    double[::1] z,
    double[::1] prices,
    double[::1] growth,
    double[::1] disc_pos,
    double[::1] disc_neg,
):
    cdef Py_ssize_t n = growth.shape[0]
    y_arr = np.empty(_off(n + 1))
    cdef double[::1] y = y_arr
    cdef Py_ssize_t k, j, o0, o1
    cdef double zk, grown, anchor, down, up, gap, up_prev
    cdef double mismatch = 0.0
    y[0] = y0
    with nogil:
        for k in range(n):
            o0 = _off(k)
            o1 = _off(k + 1)
            up_prev = 0.0
            for j in range(k + 1):
                zk = z[o0 + j]
                if y[o0 + j] > 0.0:
                    grown = y[o0 + j] / disc_pos[k]
                else:
                    grown = y[o0 + j] / disc_neg[k]
                anchor = growth[k] * prices[o0 + j]
                down = grown + zk * (prices[o1 + j] - anchor)
                up = grown + zk * (prices[o1 + j + 1] - anchor)
                if j:
                    gap = up_prev - down
                    if gap < 0.0:
                        gap = -gap
                    if gap > mismatch:
                        mismatch = gap
                y[o1 + j] = down
                up_prev = up
            y[o1 + k + 1] = up_prev
    return y_arr, mismatch
