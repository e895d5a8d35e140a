# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled coordinate descent for the weighted lasso in Gram form."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline double _soft(double z, double t) nogil:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def cd_path(const double[:, ::1] G, const double[::1] c, const double[::1] w,
            const double[::1] lambdas, double tol, long max_iter, double[::1] beta):
    """Solve min ||y - Zb||^2 + lam * sum(w|b|) for each lam, warm-started.

    G = Z'Z and c = Z'y.  ``beta`` is the starting point and is updated in
    place.  Returns (coefs[n_lam, p], sweeps[n_lam]).
    """
    cdef Py_ssize_t p = G.shape[0]
    cdef Py_ssize_t n_lam = lambdas.shape[0]
    cdef Py_ssize_t i, j, k, it
    cdef double lam, rho, new, delta, dmax, thr
    coefs_arr = np.zeros((n_lam, p), dtype=np.float64)
    sweeps_arr = np.zeros(n_lam, dtype=np.int64)
    cdef double[:, ::1] coefs = coefs_arr
    cdef long[::1] sweeps = sweeps_arr
    grad_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] g = grad_arr

    with nogil:
        # g = c - G beta
        for j in range(p):
            rho = c[j]
            for k in range(p):
                rho = rho - G[j, k] * beta[k]
            g[j] = rho
        for i in range(n_lam):
            lam = lambdas[i]
            it = 0
            while it < max_iter:
                it = it + 1
                dmax = 0.0
                for j in range(p):
                    if G[j, j] <= 0.0:
                        continue
                    rho = g[j] + G[j, j] * beta[j]
                    thr = 0.5 * lam * w[j]
                    new = _soft(rho, thr) / G[j, j]
                    delta = new - beta[j]
                    if delta != 0.0:
                        beta[j] = new
                        for k in range(p):
                            g[k] = g[k] - G[k, j] * delta
                        if fabs(delta) > dmax:
                            dmax = fabs(delta)
                if dmax < tol:
                    break
            sweeps[i] = it
            for j in range(p):
                coefs[i, j] = beta[j]
    return coefs_arr, sweeps_arr
