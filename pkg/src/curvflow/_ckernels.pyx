# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: tridiagonal solves and pairwise bubble interactions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow

cnp.import_array()


def tridiag_solve(const double[::1] sub, const double[::1] diag, const double[::1] sup,
                  const double[::1] rhs):
    cdef Py_ssize_t n = diag.shape[0]
    cdef Py_ssize_t i
    cdef double m
    c = np.empty(n, dtype=np.float64)
    x = np.empty(n, dtype=np.float64)
    cdef double[::1] cp = c
    cdef double[::1] xp = x
    if n == 0:
        return x
    cp[0] = sup[0] / diag[0] if n > 1 else 0.0
    xp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - sub[i - 1] * cp[i - 1]
        if i < n - 1:
            cp[i] = sup[i] / m
        xp[i] = (rhs[i] - sub[i - 1] * xp[i - 1]) / m
    for i in range(n - 2, -1, -1):
        xp[i] -= cp[i] * xp[i + 1]
    return x


def fv_apply(const double[::1] t, const double[::1] mass, const double[::1] u):
    """``mass*u`` plus the divergence of the face fluxes ``t*(u[m+1]-u[m])``."""
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    cdef double fl
    y = np.empty(n, dtype=np.float64)
    cdef double[::1] yp = y
    for i in range(n):
        yp[i] = mass[i] * u[i]
    for i in range(n - 1):
        fl = t[i] * (u[i + 1] - u[i])
        yp[i] -= fl
        yp[i + 1] += fl
    return y


def pair_table(const double[::1] lam, const double[:, ::1] pts, int n):
    cdef Py_ssize_t p = lam.shape[0]
    cdef Py_ssize_t m = pts.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double kap, d, li, lj, D, e, h
    cdef double expo = 0.5 * (2 - n)
    eps = np.zeros((p, p), dtype=np.float64)
    lam_deps = np.zeros((p, p), dtype=np.float64)
    coef = np.zeros((p, p), dtype=np.float64)
    cdef double[:, ::1] E = eps
    cdef double[:, ::1] L = lam_deps
    cdef double[:, ::1] C = coef
    for i in range(p):
        li = lam[i]
        for j in range(p):
            if i == j:
                continue
            lj = lam[j]
            kap = 0.0
            for k in range(m):
                d = pts[i, k] - pts[j, k]
                kap += d * d
            D = li / lj + lj / li + li * lj * kap
            e = pow(D, expo)
            h = expo * e / D
            E[i, j] = e
            L[i, j] = h * (li / lj - lj / li + li * lj * kap)
            C[i, j] = 2.0 * h * lj
    return eps, lam_deps, coef
