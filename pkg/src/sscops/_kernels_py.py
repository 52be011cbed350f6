"""Pure NumPy/SciPy fallback for the compiled kernels in ``_kernels.pyx``."""

import numpy as np
from scipy.linalg import solve_triangular


def sylvester_triu(ta, tb, c):
    """Solve TA @ Y - Y @ TB = C with TA, TB upper triangular (complex)."""
    ta = np.ascontiguousarray(ta)
    n = ta.shape[0]
    nu = tb.shape[0]
    y = np.empty((n, nu), dtype=np.complex128)
    eye = np.eye(n)
    for j in range(nu):
        rhs = c[:, j].copy()
        if j:
            rhs += y[:, :j] @ tb[:j, j]
        if n:
            y[:, j] = solve_triangular(ta - tb[j, j] * eye, rhs)
        else:
            y[:, j] = rhs
    return y


def lti_propagate(ad, x0, nsteps):
    """Iterate x_{k+1} = Ad x_k; returns the (nsteps+1, n) state history."""
    n = ad.shape[0]
    out = np.empty((nsteps + 1, n))
    out[0] = x0
    x = np.asarray(x0, dtype=float)
    for step in range(nsteps):
        x = ad @ x
        out[step + 1] = x
    return out


def lti_propagate_forced(ad, bd, x0, u):
    """Iterate x_{k+1} = Ad x_k + Bd u_k over the (nsteps, m) input table."""
    nsteps = u.shape[0]
    out = np.empty((nsteps + 1, ad.shape[0]))
    out[0] = x0
    x = np.asarray(x0, dtype=float)
    for step in range(nsteps):
        x = ad @ x + bd @ u[step]
        out[step + 1] = x
    return out
