# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time recursions. Mirrors ``pagarch._kernels_python`` exactly."""
import numpy as np

from libc.math cimport log, sqrt, INFINITY


def ma_filter(const double[:, ::1] w, const double[::1] psi):
    """Solve ``e_t = w_t - sum_q psi_q e_{t-q}`` row by row, zero pre-sample."""
    cdef Py_ssize_t n = w.shape[0], nt = w.shape[1], nq = psi.shape[0]
    cdef Py_ssize_t i, t, j, top
    cdef double acc
    out = np.empty((n, nt))
    cdef double[:, ::1] e = out
    for i in range(n):
        for t in range(nt):
            acc = w[i, t]
            top = nq if nq < t else t
            for j in range(top):
                acc -= psi[j] * e[i, t - j - 1]
            e[i, t] = acc
    return out


def concentrated_ssr(const double[:, ::1] w, const double[::1] psi):
    """Per-unit concentrated sum of squares and the profiled intercept.

    Returns ``(ssr, mu, gg)`` where ``gg = l' Sigma_psi^{-1} l``.
    """
    cdef Py_ssize_t n = w.shape[0], nt = w.shape[1], nq = psi.shape[0]
    cdef Py_ssize_t i, t, j, top
    cdef double acc, ee, ge, gg = 0.0
    g_arr = np.empty(nt)
    e_arr = np.empty(nt)
    ssr_arr = np.empty(n)
    mu_arr = np.empty(n)
    cdef double[::1] g = g_arr
    cdef double[::1] e = e_arr
    cdef double[::1] ssr = ssr_arr
    cdef double[::1] mu = mu_arr
    for t in range(nt):
        acc = 1.0
        top = nq if nq < t else t
        for j in range(top):
            acc -= psi[j] * g[t - j - 1]
        g[t] = acc
        gg += acc * acc
    for i in range(n):
        ee = 0.0
        ge = 0.0
        for t in range(nt):
            acc = w[i, t]
            top = nq if nq < t else t
            for j in range(top):
                acc -= psi[j] * e[t - j - 1]
            e[t] = acc
            ee += acc * acc
            ge += g[t] * acc
        mu[i] = ge / gg
        ssr[i] = ee - ge * ge / gg
    return ssr_arr, mu_arr, gg


def garch_variance(const double[:, ::1] u2, const double[::1] intercept,
                   const double[::1] tau, const double[::1] nu,
                   const double[::1] c_h):
    """Feasible variance recursion with ``u2 = 0`` and ``h = c_h`` pre-sample."""
    cdef Py_ssize_t n = u2.shape[0], nt = u2.shape[1]
    cdef Py_ssize_t nl = tau.shape[0], nk = nu.shape[0]
    cdef Py_ssize_t i, t, j
    cdef double acc
    out = np.empty((n, nt))
    cdef double[:, ::1] h = out
    for i in range(n):
        for t in range(nt):
            acc = intercept[i]
            for j in range(nl):
                if t - j - 1 >= 0:
                    acc += tau[j] * u2[i, t - j - 1]
            for j in range(nk):
                if t - j - 1 >= 0:
                    acc += nu[j] * h[i, t - j - 1]
                else:
                    acc += nu[j] * c_h[i]
            h[i, t] = acc
    return out


def garch_nll(const double[:, ::1] u2, const double[::1] intercept,
              const double[::1] tau, const double[::1] nu,
              const double[::1] c_h):
    """Per-unit ``sum_t log h_t + u2_t / h_t``; ``inf`` where any ``h_t <= 0``."""
    cdef Py_ssize_t n = u2.shape[0], nt = u2.shape[1]
    cdef Py_ssize_t nl = tau.shape[0], nk = nu.shape[0]
    cdef Py_ssize_t i, t, j
    cdef double acc, total
    h_arr = np.empty(nt)
    out_arr = np.empty(n)
    cdef double[::1] h = h_arr
    cdef double[::1] out = out_arr
    for i in range(n):
        total = 0.0
        for t in range(nt):
            acc = intercept[i]
            for j in range(nl):
                if t - j - 1 >= 0:
                    acc += tau[j] * u2[i, t - j - 1]
            for j in range(nk):
                if t - j - 1 >= 0:
                    acc += nu[j] * h[t - j - 1]
                else:
                    acc += nu[j] * c_h[i]
            if acc <= 0.0:
                total = INFINITY
                break
            h[t] = acc
            total += log(acc) + u2[i, t] / acc
        out[i] = total
    return out_arr


def simulate_arma_garch(const double[:, ::1] eps, const double[:, ::1] xb,
                        const double[::1] mu, const double[::1] phi,
                        const double[::1] psi, const double[::1] omega,
                        const double[::1] tau, const double[::1] nu):
    """Generate ``(y, u, h)``; pre-sample ``y = u = 0`` and ``h = omega``."""
    cdef Py_ssize_t n = eps.shape[0], nt = eps.shape[1]
    cdef Py_ssize_t np_ = phi.shape[0], nq = psi.shape[0]
    cdef Py_ssize_t nl = tau.shape[0], nk = nu.shape[0]
    cdef Py_ssize_t i, t, j
    cdef double persistence = 0.0, acc, ht, ut
    for j in range(nl):
        persistence += tau[j]
    for j in range(nk):
        persistence += nu[j]
    y_arr = np.empty((n, nt))
    u_arr = np.empty((n, nt))
    h_arr = np.empty((n, nt))
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] h = h_arr
    for i in range(n):
        for t in range(nt):
            ht = omega[i] * (1.0 - persistence)
            for j in range(nl):
                if t - j - 1 >= 0:
                    ht += tau[j] * u[i, t - j - 1] * u[i, t - j - 1]
            for j in range(nk):
                if t - j - 1 >= 0:
                    ht += nu[j] * h[i, t - j - 1]
                else:
                    ht += nu[j] * omega[i]
            ut = sqrt(ht) * eps[i, t]
            acc = mu[i] + xb[i, t] + ut
            for j in range(np_):
                if t - j - 1 >= 0:
                    acc += phi[j] * y[i, t - j - 1]
            for j in range(nq):
                if t - j - 1 >= 0:
                    acc += psi[j] * u[i, t - j - 1]
            h[i, t] = ht
            u[i, t] = ut
            y[i, t] = acc
    return y_arr, u_arr, h_arr
