# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels for weight-scalarized ridge solves.

Every entry point mirrors a function in ``_kernels_py`` with identical
signature and semantics; failed factorizations yield NaN rows.
"""
import numpy as np

from libc.math cimport sqrt, NAN
from libc.stdlib cimport malloc, free


cdef int _solve_one(const double[:, :, ::1] grams, const double[:, ::1] rhs,
                    const double[::1] w, const double[::1] penalty,
                    double* L, double* x) noexcept nogil:
    # Build M = sum_i w_i G_i + diag(penalty), r = sum_i w_i b_i, then Cholesky-solve M x = r.
    cdef Py_ssize_t m = grams.shape[0], p = grams.shape[1]
    cdef Py_ssize_t i, j, k, c
    cdef double s, wi
    for j in range(p):
        x[j] = 0.0
        for k in range(j + 1):
            L[j * p + k] = 0.0
    for c in range(m):
        wi = w[c]
        if wi == 0.0:
            continue
        for j in range(p):
            x[j] += wi * rhs[c, j]
            for k in range(j + 1):
                L[j * p + k] += wi * grams[c, j, k]
    for j in range(p):
        L[j * p + j] += penalty[j]
    # in-place lower Cholesky
    for j in range(p):
        s = L[j * p + j]
        for k in range(j):
            s -= L[j * p + k] * L[j * p + k]
        if not s > 0.0:
            return -1
        s = sqrt(s)
        L[j * p + j] = s
        for i in range(j + 1, p):
            wi = L[i * p + j]
            for k in range(j):
                wi -= L[i * p + k] * L[j * p + k]
            L[i * p + j] = wi / s
    # forward then back substitution
    for i in range(p):
        s = x[i]
        for k in range(i):
            s -= L[i * p + k] * x[k]
        x[i] = s / L[i * p + i]
    for i in range(p - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, p):
            s -= L[k * p + i] * x[k]
        x[i] = s / L[i * p + i]
    return 0


def solve_batch(const double[:, :, ::1] grams, const double[:, ::1] rhs,
                const double[:, ::1] weights, const double[::1] penalty):
    """Solve one scalarized system per weight row; returns ``(K, p)``."""
    cdef Py_ssize_t K = weights.shape[0], p = grams.shape[1], r, j
    out = np.empty((K, p), dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef double* L = <double*> malloc(p * p * sizeof(double))
    cdef double* x = <double*> malloc(p * sizeof(double))
    if L == NULL or x == NULL:
        free(L); free(x)
        raise MemoryError()
    try:
        with nogil:
            for r in range(K):
                if _solve_one(grams, rhs, weights[r], penalty, L, x) == 0:
                    for j in range(p):
                        res[r, j] = x[j]
                else:
                    for j in range(p):
                        res[r, j] = NAN
    finally:
        free(L)
        free(x)
    return out


def quadratic_loss_batch(const double[:, :, ::1] grams, const double[:, ::1] rhs,
                         const double[:, ::1] weights, const double[::1] penalty,
                         const double[:, ::1] eval_gram, const double[::1] eval_rhs,
                         double eval_const):
    """MSE of each weight row's solution under ``(eval_gram, eval_rhs, eval_const)``."""
    cdef Py_ssize_t K = weights.shape[0], p = grams.shape[1], r, j, k
    cdef double q, s
    out = np.empty(K, dtype=np.float64)
    cdef double[::1] res = out
    cdef double* L = <double*> malloc(p * p * sizeof(double))
    cdef double* x = <double*> malloc(p * sizeof(double))
    if L == NULL or x == NULL:
        free(L); free(x)
        raise MemoryError()
    try:
        with nogil:
            for r in range(K):
                if _solve_one(grams, rhs, weights[r], penalty, L, x) != 0:
                    res[r] = NAN
                    continue
                q = eval_const
                for j in range(p):
                    s = 0.0
                    for k in range(p):
                        s += eval_gram[j, k] * x[k]
                    q += x[j] * (s - 2.0 * eval_rhs[j])
                res[r] = q
    finally:
        free(L)
        free(x)
    return out
