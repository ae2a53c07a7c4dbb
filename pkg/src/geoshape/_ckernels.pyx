# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tensor kernels; drop-in replacements for ``_pykernels``."""

import numpy as np


def christoffel_from_derivs(const double[:, ::1] ginv, const double[:, :, ::1] dg):
    cdef Py_ssize_t n = ginv.shape[0]
    cdef Py_ssize_t k, i, j, l
    cdef double acc
    out = np.zeros((n, n, n))
    cdef double[:, :, ::1] g = out
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                acc = 0.0
                for l in range(n):
                    acc += ginv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
                g[k, i, j] = 0.5 * acc
                g[k, j, i] = 0.5 * acc
    return out


def riemann_from_christoffel(const double[:, :, ::1] gamma, const double[:, :, :, ::1] dgamma):
    cdef Py_ssize_t n = gamma.shape[0]
    cdef Py_ssize_t i, j, k, l, m
    cdef double acc
    out = np.zeros((n, n, n, n))
    cdef double[:, :, :, ::1] r = out
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(k + 1, n):
                    acc = dgamma[k, i, l, j] - dgamma[l, i, k, j]
                    for m in range(n):
                        acc += gamma[i, k, m] * gamma[m, l, j] - gamma[i, l, m] * gamma[m, k, j]
                    r[i, j, k, l] = acc
                    r[i, j, l, k] = -acc
    return out


def quadratic_contract(const double[:, :, ::1] gamma, const double[::1] v):
    cdef Py_ssize_t n = gamma.shape[0]
    cdef Py_ssize_t k, i, j
    cdef double acc
    out = np.zeros(n)
    cdef double[::1] o = out
    for k in range(n):
        acc = 0.0
        for i in range(n):
            for j in range(n):
                acc += gamma[k, i, j] * v[i] * v[j]
        o[k] = acc
    return out


def bilinear_contract(const double[:, :, ::1] gamma, const double[::1] v, const double[::1] w):
    cdef Py_ssize_t n = gamma.shape[0]
    cdef Py_ssize_t k, i, j
    cdef double acc
    out = np.zeros(n)
    cdef double[::1] o = out
    for k in range(n):
        acc = 0.0
        for i in range(n):
            for j in range(n):
                acc += gamma[k, i, j] * v[i] * w[j]
        o[k] = acc
    return out


def tidal_matrix(const double[:, :, :, ::1] riem, const double[::1] v):
    cdef Py_ssize_t n = riem.shape[0]
    cdef Py_ssize_t i, j, k, l
    cdef double acc
    out = np.zeros((n, n))
    cdef double[:, ::1] a = out
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                for l in range(n):
                    acc += riem[i, k, j, l] * v[k] * v[l]
            a[i, j] = acc
    return out


def inspect_metric(const double[:, ::1] g, double sym_tol, double deg_thresh):
    """Return ``(code, det)``; code 0 ok, 1 non-finite, 2 non-symmetric, 3 degenerate."""
    cdef Py_ssize_t n = g.shape[0]
    cdef Py_ssize_t i, j, k, p
    cdef double scale = 0.0, a, tol, det = 1.0, piv, f, tmp
    for i in range(n):
        for j in range(n):
            a = g[i, j]
            if a != a or a - a != 0.0:
                return 1, float("nan")
            if a < 0:
                a = -a
            if a > scale:
                scale = a
    tol = sym_tol * (scale if scale > 1.0 else 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            a = g[i, j] - g[j, i]
            if a > tol or -a > tol:
                return 2, float("nan")
    if scale == 0.0:
        return 3, 0.0
    lu = np.array(g, copy=True)
    cdef double[:, ::1] m = lu
    for k in range(n):
        p = k
        for i in range(k + 1, n):
            if abs(m[i, k]) > abs(m[p, k]):
                p = i
        piv = m[p, k]
        if piv == 0.0:
            return 3, 0.0
        if p != k:
            det = -det
            for j in range(n):
                tmp = m[k, j]
                m[k, j] = m[p, j]
                m[p, j] = tmp
        det *= piv
        for i in range(k + 1, n):
            f = m[i, k] / piv
            for j in range(k, n):
                m[i, j] -= f * m[k, j]
    if abs(det) <= deg_thresh * scale ** n:
        return 3, det
    return 0, det


def invert(const double[:, ::1] g):
    """Gauss-Jordan inverse with partial pivoting."""
    cdef Py_ssize_t n = g.shape[0]
    cdef Py_ssize_t i, j, k, p
    cdef double piv, f, tmp
    work = np.array(g, copy=True)
    out = np.eye(n)
    cdef double[:, ::1] a = work
    cdef double[:, ::1] b = out
    for k in range(n):
        p = k
        for i in range(k + 1, n):
            if abs(a[i, k]) > abs(a[p, k]):
                p = i
        if a[p, k] == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        if p != k:
            for j in range(n):
                tmp = a[k, j]; a[k, j] = a[p, j]; a[p, j] = tmp
                tmp = b[k, j]; b[k, j] = b[p, j]; b[p, j] = tmp
        piv = a[k, k]
        for j in range(n):
            a[k, j] /= piv
            b[k, j] /= piv
        for i in range(n):
            if i != k:
                f = a[i, k]
                if f != 0.0:
                    for j in range(n):
                        a[i, j] -= f * a[k, j]
                        b[i, j] -= f * b[k, j]
    return out


def geodesic_spray(const double[:, ::1] ginv, const double[:, :, ::1] dg, const double[::1] v):
    """``Gamma^k_ij v^i v^j`` straight from ``g^-1`` and ``d_k g_ij``."""
    cdef Py_ssize_t n = ginv.shape[0]
    cdef Py_ssize_t k, i, j, l
    cdef double acc
    low = np.zeros(n)
    out = np.zeros(n)
    cdef double[::1] w = low
    cdef double[::1] o = out
    # Gamma_l(v, v) = d_i g_jl v^i v^j - 1/2 d_l g_ij v^i v^j
    for l in range(n):
        acc = 0.0
        for i in range(n):
            for j in range(n):
                acc += (dg[i, j, l] - 0.5 * dg[l, i, j]) * v[i] * v[j]
        w[l] = acc
    for k in range(n):
        acc = 0.0
        for l in range(n):
            acc += ginv[k, l] * w[l]
        o[k] = acc
    return out
