# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dual evaluation kernel.

One pass over the units computes the conjugate and its first two
derivatives; natural parameters, gradient and Hessian go through BLAS on
cache-sized row blocks, so the design matrix is streamed from memory once.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, pow, sqrt
cimport scipy.linalg.cython_blas as blas

cnp.import_array()


cdef inline void _terms(int code, double alpha, double nu,
                        double* f, double* f1, double* f2) noexcept nogil:
    cdef double e, d, root
    if code == 0:
        f[0] = 0.5 * nu * nu
        f1[0] = nu
        f2[0] = 1.0
    elif code == 1:
        e = exp(nu - 1.0)
        f[0] = e
        f1[0] = e
        f2[0] = e
    elif code == 2:
        e = exp(nu)
        f[0] = nu + e
        f1[0] = 1.0 + e
        f2[0] = e
    elif code == 3:
        f[0] = -1.0 - log(-nu)
        f1[0] = -1.0 / nu
        f2[0] = 1.0 / (nu * nu)
    elif code == 4:
        d = 1.0 - nu
        f[0] = nu / d
        f1[0] = 1.0 / (d * d)
        f2[0] = 2.0 / (d * d * d)
    elif code == 5:
        root = pow(nu, 1.0 / alpha)
        f[0] = alpha / (alpha + 1.0) * nu * root
        f1[0] = root
        f2[0] = root / (alpha * nu)
    else:
        e = expm1(nu)
        f[0] = nu - log(-e)
        f1[0] = -1.0 / e
        f2[0] = (e + 1.0) / (e * e)


cdef enum:
    BLOCK = 1024


def dual_terms(int code, double alpha, const double[::1] offset,
               const double[:, ::1] X, const double[::1] lam,
               const double[::1] scale, double lo, double hi,
               bint want_hess=True):
    cdef int n = <int>X.shape[0], p = <int>X.shape[1]
    cdef int i, j, b, m, one = 1
    cdef int bad = -1
    cdef double f, f1, f2, s, value = 0.0
    cdef double d_one = 1.0, d_zero = 0.0
    cdef char trans_t = b'T', trans_n = b'N', upper = b'U'
    cdef int rows = BLOCK if n > BLOCK else (n if n > 0 else 1)
    cdef double[::1] nus = np.empty(rows)
    cdef double[::1] d1 = np.empty(rows)
    cdef double[:, ::1] xs = np.empty((rows if want_hess else 1, p))

    if code < 0 or code > 6:
        raise ValueError(f"unknown generator code {code}")
    grad_arr = np.zeros(p)
    cdef double[::1] grad = grad_arr
    hess_arr = np.zeros((p, p), order="F")
    cdef double[::1, :] hess = hess_arr
    if n == 0:
        return 0.0, grad_arr, (np.zeros((p, p)) if want_hess else None), -1

    # Units are processed in row blocks that stay in cache.  A row-major block
    # is the column-major p x m matrix X_b^T, so nu = offset + X_b lam is a
    # transposed gemv, the gradient a plain gemv and the Hessian a rank-m
    # update on the curvature-scaled block.
    with nogil:
        b = 0
        while b < n:
            m = rows if n - b > rows else n - b
            for i in range(m):
                nus[i] = offset[b + i]
            blas.dgemv(&trans_t, &p, &m, &d_one, <double*>&X[b, 0], &p,
                       <double*>&lam[0], &one, &d_one, &nus[0], &one)
            for i in range(m):
                if not (nus[i] > lo and nus[i] < hi):
                    bad = b + i
                    break
            if bad >= 0:
                break
            for i in range(m):
                _terms(code, alpha, nus[i], &f, &f1, &f2)
                s = scale[b + i]
                value += s * f
                d1[i] = s * f1
                if want_hess:
                    f2 = s * f2
                    f2 = sqrt(f2) if f2 > 0.0 else 0.0
                    for j in range(p):
                        xs[i, j] = f2 * X[b + i, j]
            blas.dgemv(&trans_n, &p, &m, &d_one, <double*>&X[b, 0], &p,
                       &d1[0], &one, &d_one, &grad[0], &one)
            if want_hess:
                blas.dsyrk(&upper, &trans_n, &p, &m, &d_one, &xs[0, 0], &p,
                           &d_one, &hess[0, 0], &p)
            b += m
        if bad < 0 and want_hess:
            for j in range(p):
                for i in range(j):
                    hess[j, i] = hess[i, j]
    if bad >= 0:
        return None, None, None, bad
    return value, grad_arr, (np.ascontiguousarray(hess_arr) if want_hess else None), -1


def link(int code, double alpha, nu_in):
    cdef const double[::1] nu = np.ascontiguousarray(nu_in, dtype=np.float64)
    cdef Py_ssize_t i, n = nu.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double f, f1, f2
    with nogil:
        for i in range(n):
            _terms(code, alpha, nu[i], &f, &f1, &f2)
            out[i] = f1
    return out_arr
