# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Glauber update kernels.

Must stay operation-for-operation identical to ``_pykernels`` so that the two
backends produce bit-identical trajectories and accumulators.
"""
from libc.math cimport exp

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF CLAMP = 700.0


cdef inline bint _accept(double beta, signed char s, double h, double u) noexcept nogil:
    cdef double arg = 2.0 * beta * s * h
    if arg > CLAMP:
        arg = CLAMP
    elif arg < -CLAMP:
        arg = -CLAMP
    return u < 1.0 / (1.0 + exp(arg))


def burn(signed char[::1] s, double[::1] H, const double[:, ::1] JT, double beta,
         const double[::1] u, int[::1] flips=None):
    """Advance the chain by ``len(u) // 2`` attempts without measuring."""
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t n_att = u.shape[0] // 2
    cdef Py_ssize_t a, i, k
    cdef long long n_flips = 0
    cdef double two_s
    cdef bint record = flips is not None
    with nogil:
        for a in range(n_att):
            k = <Py_ssize_t>(u[2 * a] * n)
            if _accept(beta, s[k], H[k], u[2 * a + 1]):
                s[k] = -s[k]
                two_s = 2.0 * s[k]
                for i in range(n):
                    H[i] += two_s * JT[k, i]
                n_flips += 1
                if record:
                    flips[a] = <int>k
            elif record:
                flips[a] = -1
    return n_flips


def measure(signed char[::1] s, double[::1] H, double[::1] th,
            const double[:, ::1] JT, const double[:, ::1] TB, double beta,
            const double[::1] u,
            long long t0, Py_ssize_t lag,
            long long[::1] m_sum, long long[::1] m_last,
            long long[:, ::1] S0, long long[:, ::1] last0,
            long long[:, ::1] S1, long long[:, ::1] last1,
            signed char[::1] s_lag, int[::1] ring,
            double[:, ::1] T_sum, double[:, ::1] T_mark, double[::1] Theta,
            long long[::1] clock, int[::1] flips=None):
    """Advance the chain and update the lazy moment sums.

    Observation ``t`` is the configuration after measured attempt ``t``. Every
    running sum only records the held state when one of its factors changes.
    ``TB[k, i] = tanh(2 beta J[i, k])`` drives the tanh addition-formula
    update of ``th = tanh(beta H)``; the caller refreshes ``th`` exactly.
    """
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t n_att = u.shape[0] // 2
    cdef Py_ssize_t a, i, j, k, old
    cdef long long t, d
    cdef long long n_flips = 0
    cdef bint flip
    cdef signed char sk, so
    cdef double two_s, w, tb
    cdef bint record = flips is not None
    with nogil:
        for a in range(n_att):
            t = t0 + a
            k = <Py_ssize_t>(u[2 * a] * n)
            flip = _accept(beta, s[k], H[k], u[2 * a + 1])
            old = -1
            if t >= lag + 1:
                old = ring[t % lag]
            if flip:
                sk = s[k]
                w = <double>(t - clock[0])
                if t > clock[0]:
                    for i in range(n):
                        Theta[i] += w * th[i]
                    clock[0] = t
                for i in range(n):
                    T_sum[i, k] += sk * (Theta[i] - T_mark[i, k])
                    T_mark[i, k] = Theta[i]
                m_sum[k] += sk * (t - m_last[k])
                m_last[k] = t
                for j in range(n):
                    d = t - last0[k, j]
                    S0[k, j] += sk * s[j] * d
                    last0[k, j] = t
                for i in range(n):
                    d = t - last0[i, k]
                    S0[i, k] += s[i] * sk * d
                    last0[i, k] = t
                for j in range(n):
                    if t > last1[k, j]:
                        S1[k, j] += sk * s_lag[j] * (t - last1[k, j])
                        last1[k, j] = t
            if old >= 0:
                so = s_lag[old]
                for i in range(n):
                    if t > last1[i, old]:
                        S1[i, old] += s[i] * so * (t - last1[i, old])
                        last1[i, old] = t
                s_lag[old] = -so
            if flip:
                s[k] = -s[k]
                two_s = 2.0 * s[k]
                for i in range(n):
                    H[i] += two_s * JT[k, i]
                for i in range(n):
                    tb = s[k] * TB[k, i]
                    th[i] = (th[i] + tb) / (1.0 + th[i] * tb)
                n_flips += 1
            if t == 0:
                for i in range(n):
                    s_lag[i] = s[i]
            ring[t % lag] = <int>k if flip else -1
            if record:
                flips[a] = <int>k if flip else -1
    return n_flips
