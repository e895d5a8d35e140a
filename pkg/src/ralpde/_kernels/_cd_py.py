"""Pure-Python coordinate descent, numerically identical in intent to the
compiled kernel; used when the extension is not built."""
import numpy as np


def cd_path(G, c, w, lambdas, tol, max_iter, beta):
    G = np.ascontiguousarray(G, dtype=np.float64)
    p = G.shape[0]
    diag = np.diag(G).tolist()
    wl = np.asarray(w, dtype=np.float64).tolist()
    g = np.asarray(c, dtype=np.float64) - G @ beta
    coefs = np.zeros((len(lambdas), p))
    sweeps = np.zeros(len(lambdas), dtype=np.int64)
    cols = [G[:, j].copy() for j in range(p)]
    for i, lam in enumerate(lambdas):
        it = 0
        while it < max_iter:
            it += 1
            dmax = 0.0
            for j in range(p):
                gjj = diag[j]
                if gjj <= 0.0:
                    continue
                bj = beta[j]
                rho = g[j] + gjj * bj
                thr = 0.5 * lam * wl[j]
                if rho > thr:
                    new = (rho - thr) / gjj
                elif rho < -thr:
                    new = (rho + thr) / gjj
                else:
                    new = 0.0
                delta = new - bj
                if delta != 0.0:
                    beta[j] = new
                    g -= cols[j] * delta
                    if abs(delta) > dmax:
                        dmax = abs(delta)
            if dmax < tol:
                break
        sweeps[i] = it
        coefs[i] = beta
    return coefs, sweeps
