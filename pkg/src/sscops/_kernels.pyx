# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: triangular Sylvester recurrence and LTI stepping.

Semantics must stay identical to the pure fallback in ``_kernels_py``;
``tests/test_kernels.py`` enforces the equivalence.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def sylvester_triu(cnp.complex128_t[:, :] ta, cnp.complex128_t[:, :] tb,
                   cnp.complex128_t[:, :] c):
    """Solve TA @ Y - Y @ TB = C with TA, TB upper triangular (complex).

    Column-by-column back substitution: column j of Y satisfies
    (TA - TB[j, j] I) y_j = c_j + sum_{k < j} TB[k, j] y_k.
    """
    cdef Py_ssize_t n = ta.shape[0]
    cdef Py_ssize_t nu = tb.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] y_arr = np.empty((n, nu), dtype=np.complex128)
    cdef cnp.complex128_t[:, :] y = y_arr
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] rhs_arr = np.empty(n, dtype=np.complex128)
    cdef cnp.complex128_t[:] rhs = rhs_arr
    cdef Py_ssize_t i, j, k
    cdef cnp.complex128_t beta, acc, coeff

    for j in range(nu):
        for i in range(n):
            rhs[i] = c[i, j]
        for k in range(j):
            coeff = tb[k, j]
            if coeff != 0:
                for i in range(n):
                    rhs[i] = rhs[i] + coeff * y[i, k]
        beta = tb[j, j]
        for i in range(n - 1, -1, -1):
            acc = rhs[i]
            for k in range(i + 1, n):
                acc = acc - ta[i, k] * y[k, j]
            y[i, j] = acc / (ta[i, i] - beta)
    return y_arr


def lti_propagate(cnp.float64_t[:, :] ad, cnp.float64_t[:] x0, Py_ssize_t nsteps):
    """Iterate x_{k+1} = Ad x_k; returns the (nsteps+1, n) state history."""
    cdef Py_ssize_t n = ad.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((nsteps + 1, n))
    cdef cnp.float64_t[:, :] out = out_arr
    cdef Py_ssize_t i, k, step
    cdef cnp.float64_t acc

    for i in range(n):
        out[0, i] = x0[i]
    for step in range(nsteps):
        for i in range(n):
            acc = 0.0
            for k in range(n):
                acc += ad[i, k] * out[step, k]
            out[step + 1, i] = acc
    return out_arr


def lti_propagate_forced(cnp.float64_t[:, :] ad, cnp.float64_t[:, :] bd,
                         cnp.float64_t[:] x0, cnp.float64_t[:, :] u):
    """Iterate x_{k+1} = Ad x_k + Bd u_k over the (nsteps, m) input table."""
    cdef Py_ssize_t n = ad.shape[0]
    cdef Py_ssize_t m = bd.shape[1]
    cdef Py_ssize_t nsteps = u.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((nsteps + 1, n))
    cdef cnp.float64_t[:, :] out = out_arr
    cdef Py_ssize_t i, k, step
    cdef cnp.float64_t acc

    for i in range(n):
        out[0, i] = x0[i]
    for step in range(nsteps):
        for i in range(n):
            acc = 0.0
            for k in range(n):
                acc += ad[i, k] * out[step, k]
            for k in range(m):
                acc += bd[i, k] * u[step, k]
            out[step + 1, i] = acc
    return out_arr
