# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors :mod:`latent_steer._pykernels` op for op."""

import numpy as np

from libc.math cimport sqrt

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

ctypedef unsigned long long u64


def tanimoto_rows(const u64[:, ::1] fps, const u64[::1] ref):
    cdef Py_ssize_t n = fps.shape[0], w = fps.shape[1], r, k
    cdef long long inter, union_
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    if ref.shape[0] != w:
        raise ValueError("fingerprint width mismatch")
    with nogil:
        for r in range(n):
            inter = 0
            union_ = 0
            for k in range(w):
                inter += __builtin_popcountll(fps[r, k] & ref[k])
                union_ += __builtin_popcountll(fps[r, k] | ref[k])
            o[r] = 1.0 if union_ == 0 else <double>inter / <double>union_
    return out


def tanimoto_pairs(const u64[:, ::1] a, const u64[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], w = a.shape[1], r, k
    cdef long long inter, union_
    if b.shape[0] != n or b.shape[1] != w:
        raise ValueError("fingerprint shape mismatch")
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            inter = 0
            union_ = 0
            for k in range(w):
                inter += __builtin_popcountll(a[r, k] & b[r, k])
                union_ += __builtin_popcountll(a[r, k] | b[r, k])
            o[r] = 1.0 if union_ == 0 else <double>inter / <double>union_
    return out


def smr_rows(const double[:, ::1] values, long gamma, double tau):
    cdef Py_ssize_t m = values.shape[0], L = values.shape[1], r, k
    cdef long distinct, bad
    out = np.zeros(m, dtype=np.int64)
    cdef long long[::1] o = out
    srt = np.sort(np.asarray(values), axis=1)
    cdef const double[:, ::1] s = np.ascontiguousarray(srt)
    for r in range(m):
        distinct = 1 if L > 0 else 0
        for k in range(1, L):
            if s[r, k] != s[r, k - 1]:
                distinct += 1
        if distinct < gamma:
            continue
        if L <= 1:
            o[r] = 1
            continue
        bad = 0
        for k in range(L - 1):
            if values[r, k + 1] < values[r, k] - 1e-12:
                bad += 1
        if <double>bad / <double>(L - 1) <= tau:
            o[r] = 1
    return out


def joint_histogram(const long long[::1] xb, const long long[::1] yb, long nx, long ny):
    cdef Py_ssize_t n = xb.shape[0], r
    if yb.shape[0] != n:
        raise ValueError("length mismatch")
    out = np.zeros((nx, ny), dtype=np.int64)
    cdef long long[:, ::1] o = out
    for r in range(n):
        if xb[r] < 0 or xb[r] >= nx or yb[r] < 0 or yb[r] >= ny:
            raise ValueError("bin index out of range")
        o[xb[r], yb[r]] += 1
    return out


def jacobi_eigh(a_in, double tol=1e-15, int max_sweeps=64):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors as columns), unsorted.
    """
    a_np = np.array(a_in, dtype=np.float64, order="C", copy=True)
    if a_np.ndim != 2 or a_np.shape[0] != a_np.shape[1]:
        raise ValueError("jacobi_eigh expects a square matrix")
    cdef Py_ssize_t n = a_np.shape[0], p, q, k
    v_np = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] a = a_np
    cdef double[:, ::1] v = v_np
    cdef double off, total, theta, t, c, s, x, y
    cdef int sweep
    total = 0.0
    for p in range(n):
        for q in range(n):
            total += a[p, q] * a[p, q]
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if off <= tol * tol * total or off == 0.0:
            return np.diag(a_np).copy(), v_np
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                if theta >= 0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    x = a[k, p]
                    y = a[k, q]
                    a[k, p] = c * x - s * y
                    a[k, q] = s * x + c * y
                for k in range(n):
                    x = a[p, k]
                    y = a[q, k]
                    a[p, k] = c * x - s * y
                    a[q, k] = s * x + c * y
                for k in range(n):
                    x = v[k, p]
                    y = v[k, q]
                    v[k, p] = c * x - s * y
                    v[k, q] = s * x + c * y
    raise ArithmeticError("Jacobi iteration did not converge")
