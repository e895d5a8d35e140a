"""Sparse regression: OLS, weighted lasso paths, Pareto-corner selection,
the recurrent adaptive lasso with AIC model choice, and the STRidge baseline.

Internally every fit works on columns scaled to unit root-mean-square and a
target scaled the same way, so supports do not depend on the units of the
library columns.  The scaled problem is compressed once by a QR factorization
of ``[Z | y]``; all subset fits, Gram matrices and residual norms are then
computed from the small triangular factor.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.linalg

from ._kernels import cd_path
from .core import DesignMatrix, SparseModel

log = logging.getLogger(__name__)

N_LAMBDA = 100
LAMBDA_RATIO = 1e-4
CD_TOL = 1e-7
CD_MAX_SWEEPS = 100_000
GAMMAS = (1, 2, 3, 4, 5)
AIC_FLOOR = 1e-300
DEGENERATE_RTOL = 1e-13
# singular values of the unit-RMS design below this fraction of the largest
# are treated as exact collinearity in subset fits
RANK_RTOL = 1e-10


class ConvergenceError(RuntimeError):
    """Coordinate descent hit the sweep limit."""

    def __init__(self, index: int, lam: float):
        super().__init__(f"coordinate descent did not converge at lambda index {index} (lambda={lam:g})")
        self.index = index
        self.lam = lam


# ----------------------------------------------------------------------------
# least squares and information criterion


def ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Minimum-norm least squares via a complete orthogonal factorization.

    Returns ``(beta, rss, rank_deficient)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < p:
        raise ValueError(f"need rows >= cols, got {n} x {p}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input to ols")
    if p == 0:
        return np.zeros(0), float(y @ y), False
    beta, _, rank, _ = scipy.linalg.lstsq(X, y, lapack_driver="gelsy")
    r = y - X @ beta
    return beta, float(r @ r), bool(rank < p)


def aic(rss: float, n: int, k: int) -> float:
    """Gaussian-likelihood AIC: n*ln(rss/n) + 2(k+1)."""
    if n <= 0 or rss < 0 or k < 0:
        raise ValueError("aic needs n > 0, rss >= 0, k >= 0")
    return n * math.log(max(rss, AIC_FLOOR) / n) + 2 * (k + 1)


def adaptive_weights(beta_ols: np.ndarray, gamma: float) -> np.ndarray:
    """``|beta|**-gamma``; exact zeros map to ``inf`` (column excluded)."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    b = np.abs(np.asarray(beta_ols, dtype=np.float64))
    w = np.full_like(b, np.inf)
    nz = b > 0
    w[nz] = b[nz] ** (-gamma)
    return w


# ----------------------------------------------------------------------------
# scaled + compressed problem


@dataclass
class _Compressed:
    """QR-compressed form of a column-scaled regression problem."""

    R: np.ndarray  # p x p upper-triangular factor of the scaled design
    r_y: np.ndarray  # Q' y_scaled
    rss_perp: float  # part of ||y_scaled||^2 outside span(Z)
    col_scale: np.ndarray
    y_scale: float
    n: int

    @classmethod
    def build(cls, X: np.ndarray, y: np.ndarray) -> "_Compressed":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n, p = X.shape
        s = np.sqrt(np.mean(X * X, axis=0))
        s_safe = np.where(s > 0, s, 1.0)
        sy = math.sqrt(float(np.mean(y * y)))
        if sy == 0:
            raise ValueError("target is identically zero")
        A = np.column_stack([X / s_safe, y / sy])
        Rfull = scipy.linalg.qr(A, mode="r", overwrite_a=True, check_finite=False)[0]
        k = min(n, p + 1)
        Rfull = Rfull[:k]
        if k < p + 1:
            Rfull = np.vstack([Rfull, np.zeros((p + 1 - k, p + 1))])
        return cls(
            R=np.ascontiguousarray(Rfull[:p, :p]), r_y=Rfull[:p, p].copy(),
            rss_perp=float(Rfull[p, p] ** 2), col_scale=s, y_scale=sy, n=n,
        )

    def ols(self, cols: Sequence[int]) -> tuple[np.ndarray, float, bool]:
        """Scaled OLS on a column subset -> (b, scaled rss, rank_deficient)."""
        cols = list(cols)
        if not cols:
            return np.zeros(0), float(self.r_y @ self.r_y) + self.rss_perp, False
        Rj = self.R[:, cols]
        b, _, rank, _ = scipy.linalg.lstsq(Rj, self.r_y, cond=RANK_RTOL, lapack_driver="gelsy")
        r = self.r_y - Rj @ b
        return b, float(r @ r) + self.rss_perp, bool(rank < len(cols))

    def rss(self, cols: Sequence[int], b: np.ndarray) -> float:
        r = self.r_y - self.R[:, list(cols)] @ b
        return float(r @ r) + self.rss_perp

    def natural(self, cols: Sequence[int], b: np.ndarray) -> np.ndarray:
        return b * self.y_scale / self.col_scale[list(cols)]


def _usable_columns(X: np.ndarray) -> np.ndarray:
    """Columns that are not numerically zero."""
    rms = np.sqrt(np.mean(np.asarray(X, dtype=np.float64) ** 2, axis=0))
    top = rms.max() if rms.size else 0.0
    return np.flatnonzero(rms > DEGENERATE_RTOL * top)


# ----------------------------------------------------------------------------
# lasso path


@dataclass
class LassoPath:
    """Weighted-lasso solutions over a descending lambda grid.

    ``coefs`` are in natural units; ``coefs_scaled`` are on the unit-RMS
    scale on which the penalty acts.  ``penalty`` is ``sum(w * |coefs_scaled|)``
    and ``residual_norm`` is ``||y - X beta||_2``.
    """

    lambdas: np.ndarray
    coefs: np.ndarray
    coefs_scaled: np.ndarray
    residual_norm: np.ndarray
    penalty: np.ndarray
    weights: np.ndarray
    sweeps: np.ndarray
    lambda_max: float


def _lambda_grid(lam_max: float, n: int = N_LAMBDA, ratio: float = LAMBDA_RATIO) -> np.ndarray:
    return lam_max * np.logspace(0.0, math.log10(ratio), n)


def _polish(G: np.ndarray, c: np.ndarray, w: np.ndarray, lam: float, b: np.ndarray) -> np.ndarray:
    """Solve the stationarity equations exactly on the CD support.

    Coordinate descent stops on coefficient change, which leaves gradient
    errors of order diag(G) * tol.  The refined solution is kept only if it
    has the same sign pattern and satisfies the inactive-set conditions.
    """
    act = np.flatnonzero(b)
    if act.size == 0:
        return b
    s = np.sign(b[act])
    rhs = c[act] - 0.5 * lam * w[act] * s
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            ba = scipy.linalg.solve(G[np.ix_(act, act)], rhs, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        return b
    if not np.all(np.isfinite(ba)) or np.any(np.sign(ba) != s):
        return b
    out = np.zeros_like(b)
    out[act] = ba
    grad = c - G @ out
    inactive = np.setdiff1d(np.arange(len(b)), act)
    slack = 0.5 * lam * w[inactive]
    if np.any(np.abs(grad[inactive]) > slack * (1 + 1e-9) + 1e-12 * max(1.0, float(np.abs(c).max()))):
        return b
    return out


def _path_compressed(
    comp: _Compressed,
    cols: Sequence[int],
    w: np.ndarray,
    lambdas: np.ndarray | None = None,
    tol: float = CD_TOL,
    max_sweeps: int = CD_MAX_SWEEPS,
    strict: bool = True,
) -> LassoPath:
    cols = list(cols)
    p = len(cols)
    w = np.asarray(w, dtype=np.float64)
    keep = np.flatnonzero(np.isfinite(w))
    Rk = comp.R[:, [cols[i] for i in keep]]
    G = np.ascontiguousarray(Rk.T @ Rk)
    c = np.ascontiguousarray(Rk.T @ comp.r_y)
    wk = np.ascontiguousarray(w[keep])
    pen = wk > 0
    lam_max = float(np.max(2 * np.abs(c[pen]) / wk[pen])) if np.any(pen) else 0.0
    # scaled-problem lambda = natural lambda / y_scale
    if lambdas is None:
        lam_scaled = _lambda_grid(lam_max) if lam_max > 0 else np.zeros(1)
    else:
        lam_scaled = np.asarray(lambdas, dtype=np.float64) / comp.y_scale
    beta0 = np.zeros(len(keep))
    bk, sweeps = cd_path(G, c, wk, np.ascontiguousarray(lam_scaled), tol, max_sweeps, beta0)
    for i, lam in enumerate(lam_scaled):
        bk[i] = _polish(G, c, wk, float(lam), bk[i])
    bad = np.flatnonzero(sweeps >= max_sweeps)
    if bad.size:
        i = int(bad[0])
        if strict:
            raise ConvergenceError(i, float(lam_scaled[i] * comp.y_scale))
        warnings.warn(f"coordinate descent hit the sweep limit at lambda index {i}", RuntimeWarning)
    b = np.zeros((len(lam_scaled), p))
    b[:, keep] = bk
    rss = np.array([comp.rss([cols[i] for i in keep], row) for row in bk])
    nat = b * comp.y_scale / comp.col_scale[cols]
    return LassoPath(
        lambdas=lam_scaled * comp.y_scale,
        coefs=nat,
        coefs_scaled=b,
        residual_norm=np.sqrt(np.maximum(rss, 0.0)) * comp.y_scale,
        penalty=np.abs(bk) @ wk,
        weights=w,
        sweeps=sweeps,
        lambda_max=lam_max * comp.y_scale,
    )


def lasso_path(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    lambdas: np.ndarray | None = None,
    tol: float = CD_TOL,
    max_sweeps: int = CD_MAX_SWEEPS,
) -> LassoPath:
    """Weighted lasso ``||y - X b||^2 + lam * sum(w_j * s_j * |b_j|)``.

    ``s_j`` is the root-mean-square of column j, so the penalty acts on
    scale-free coefficients.  For an orthonormal design this reduces to
    ``b_j = soft(b_ols_j, lam * w_j * s_j / 2)``.  Infinite weights drop the
    column (coefficient fixed at 0).  Without an explicit grid, 100
    log-spaced values from ``lambda_max`` down to ``1e-4 * lambda_max`` are
    used.
    """
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1]
    w = np.ones(p) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != (p,) or np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("weights must be non-negative, one per column")
    comp = _Compressed.build(X, y)
    return _path_compressed(comp, range(p), w, lambdas, tol, max_sweeps)


# ----------------------------------------------------------------------------
# Pareto corner


@dataclass(frozen=True)
class ParetoChoice:
    index: int
    lam: float
    degenerate: bool


def pareto_corner(residual_norm: np.ndarray, penalty: np.ndarray, tol: float = 1e-9) -> tuple[int, bool]:
    """Index of the trade-off corner of a path ordered by descending lambda.

    The curve ``(log residual, log(1 + penalty))`` is rescaled to the unit
    square and the point farthest below the chord joining its endpoints is
    returned.  Ties go to the larger lambda (smaller index).  A curve with no
    point below the chord is degenerate: the largest lambda whose residual is
    within 5% of the smallest residual is returned instead.
    """
    res = np.asarray(residual_norm, dtype=np.float64)
    pen = np.asarray(penalty, dtype=np.float64)
    xs = np.log(np.maximum(res, 1e-300))
    ys = np.log1p(pen)

    def fallback() -> tuple[int, bool]:
        ok = np.flatnonzero(res <= 1.05 * res.min())
        return int(ok[0]), True

    xr, yr = xs.max() - xs.min(), ys.max() - ys.min()
    if len(res) < 3 or xr <= 0 or yr <= 0:
        return fallback()
    u = (xs - xs.min()) / xr
    v = (ys - ys.min()) / yr
    ax, ay, bx, by = u[0], v[0], u[-1], v[-1]
    dx, dy = bx - ax, by - ay
    norm = math.hypot(dx, dy)
    if norm == 0:
        return fallback()
    dist = ((u - ax) * dy - (v - ay) * dx) / norm
    # sign so that the origin side of the chord is positive
    if (0 - ax) * dy - (0 - ay) * dx < 0:
        dist = -dist
    best = dist.max()
    if best <= tol:
        return fallback()
    idx = int(np.flatnonzero(dist >= best - tol * max(1.0, abs(best)))[0])
    return idx, False


def pareto_select(path: LassoPath) -> ParetoChoice:
    lam = np.asarray(path.lambdas)
    if len(np.unique(lam)) < 3:
        raise ValueError("Pareto selection needs at least 3 distinct lambdas")
    idx, degenerate = pareto_corner(path.residual_norm, path.penalty)
    return ParetoChoice(idx, float(lam[idx]), degenerate)


# ----------------------------------------------------------------------------
# recurrent adaptive lasso


@dataclass
class RALStep:
    gamma: int
    k: int
    input_set: list[str]
    weights: list[float]
    lam: float
    pareto_degenerate: bool
    active: list[str]
    lasso_coefs: dict[str, float]
    refit_coefs: dict[str, float]
    rss: float
    aic: float


@dataclass
class RALTrace:
    steps: list[RALStep] = field(default_factory=list)

    def to_list(self) -> list[dict[str, Any]]:
        return [vars(s).copy() for s in self.steps]

    def by_gamma(self, gamma: int) -> list[RALStep]:
        return [s for s in self.steps if s.gamma == gamma]


def _model(
    names: list[str], comp: _Compressed, cols: list[int], method: str, target: str,
    info: dict[str, Any],
) -> tuple[SparseModel, float]:
    b, rss_s, deficient = comp.ols(cols)
    beta = comp.natural(cols, b)
    coefs = {names[j]: float(v) for j, v in zip(cols, beta) if v != 0.0}
    rss = rss_s * comp.y_scale**2
    info = dict(info, rank_deficient=deficient)
    a = aic(rss, comp.n, len(coefs))
    return SparseModel(coefs, rss, comp.n, a, method, target, not coefs, info), rss


def recurrent_adaptive_lasso(
    dm: DesignMatrix, gammas: Sequence[int] = GAMMAS, max_sweeps: int = CD_MAX_SWEEPS,
) -> tuple[SparseModel, RALTrace]:
    """Iterated adaptive lasso with Pareto-corner lambdas and AIC model choice.

    For each gamma the candidate set starts at every usable column; each
    round derives weights from a scaled OLS fit on the current set, runs the
    weighted lasso path, keeps the Pareto-corner solution's active columns and
    scores the OLS refit on them by AIC.  Rounds stop once the active set no
    longer changes.  The returned model is the OLS refit of the minimum-AIC
    candidate (ties: smaller support, then smaller gamma).  A gamma whose
    lasso path fails to converge is abandoned and noted in ``info``.
    """
    X = np.asarray(dm.X)
    y = np.asarray(dm.y)
    if np.iscomplexobj(X) or np.iscomplexobj(y):
        raise ValueError("complexify the design matrix before regression")
    n, p = X.shape
    if n < 2 * p:
        log.warning("only %d rows for %d columns; results may be unreliable", n, p)
    if np.ptp(y) == 0:
        raise ValueError("target is constant")
    names = dm.names
    comp = _Compressed.build(X, y)
    usable = [int(j) for j in _usable_columns(X)]
    trace = RALTrace()
    failures: list[dict[str, Any]] = []
    last_exc: ConvergenceError | None = None
    for gamma in gammas:
        current = list(usable)
        k = 1
        while current:
            b_ols, _, _ = comp.ols(current)
            w = adaptive_weights(b_ols, gamma)
            try:
                path = _path_compressed(comp, current, w, max_sweeps=max_sweeps)
            except ConvergenceError as exc:
                log.warning("gamma=%d round %d abandoned: %s", gamma, k, exc)
                failures.append({"gamma": gamma, "k": k, "error": str(exc)})
                last_exc = exc
                break
            if len(path.lambdas) >= 3:
                choice = pareto_select(path)
                idx, lam, degenerate = choice.index, choice.lam, choice.degenerate
            else:
                idx, lam, degenerate = len(path.lambdas) - 1, float(path.lambdas[-1]), True
            bl = path.coefs[idx]
            active = [current[i] for i in np.flatnonzero(bl)]
            refit, rss = _model(names, comp, active, "RAL", dm.target, {})
            trace.steps.append(RALStep(
                gamma=gamma, k=k, input_set=[names[j] for j in current],
                weights=[float(v) for v in w], lam=lam, pareto_degenerate=degenerate,
                active=[names[j] for j in active],
                lasso_coefs={names[current[i]]: float(bl[i]) for i in np.flatnonzero(bl)},
                refit_coefs=refit.coefficients, rss=rss, aic=refit.aic,
            ))
            if active == current:
                break
            current = active
            k += 1
    if last_exc is not None and not trace.steps:
        raise last_exc
    if not trace.steps or all(not s.active for s in trace.steps):
        model = SparseModel({}, float(y @ y), n, aic(float(y @ y), n, 0), "RAL",
                            dm.target, True, {"reason": "null"})
        model.trace = trace.to_list()
        return model, trace
    best = min(trace.steps, key=lambda s: (s.aic, len(s.active), s.gamma, s.k))
    cols = [names.index(t) for t in best.active]
    info: dict[str, Any] = {"gamma": best.gamma, "k": best.k}
    if failures:
        info["abandoned"] = failures
    model, _ = _model(names, comp, cols, "RAL", dm.target, info)
    model.trace = trace.to_list()
    return model, trace


# ----------------------------------------------------------------------------
# STRidge baseline


def stridge(
    dm: DesignMatrix, d_tol: float, lam_ridge: float | None = None, max_iter: int = 25,
) -> SparseModel:
    """Sequential threshold ridge regression.

    Columns are scaled to unit l2 norm; ridge coefficients on that scale with
    magnitude below ``d_tol`` are removed and the ridge fit is repeated on the
    survivors until nothing changes.  Survivors are refit by OLS.
    """
    X = np.asarray(dm.X, dtype=np.float64)
    y = np.asarray(dm.y, dtype=np.float64)
    if not d_tol > 0:
        raise ValueError("d_tol must be positive")
    n, p = X.shape
    lam = 1e-5 * p if lam_ridge is None else float(lam_ridge)
    if lam < 0:
        raise ValueError("lam_ridge must be non-negative")
    names = dm.names
    norms = np.linalg.norm(X, axis=0)
    active = [int(j) for j in _usable_columns(X)]
    Z = X / np.where(norms > 0, norms, 1.0)

    def ridge(cols: list[int]) -> np.ndarray:
        Zc = Z[:, cols]
        A = Zc.T @ Zc + lam * np.eye(len(cols))
        return scipy.linalg.lstsq(A, Zc.T @ y, lapack_driver="gelsy")[0]

    info: dict[str, Any] = {"d_tol": d_tol, "lam_ridge": lam}
    it = 0
    while active and it < max_iter:
        it += 1
        b = ridge(active)
        keep = [j for j, v in zip(active, b) if abs(v) >= d_tol]
        if keep == active:
            break
        active = keep
    info["iterations"] = it
    if not active:
        rss = float(y @ y)
        return SparseModel({}, rss, n, aic(rss, n, 0), "STRidge", dm.target, True,
                           dict(info, reason="null"))
    beta, rss, deficient = ols(X[:, active], y)
    coefs = {names[j]: float(v) for j, v in zip(active, beta) if v != 0.0}
    info["rank_deficient"] = deficient
    return SparseModel(coefs, rss, n, aic(rss, n, len(coefs)), "STRidge", dm.target,
                       not coefs, info)


def identify(dm: DesignMatrix, method: str = "RAL", d_tol: float = 2.0) -> SparseModel:
    """Dispatch to the recurrent adaptive lasso or STRidge."""
    from .library import complexify

    if dm.is_complex:
        dm = complexify(dm)
    m = method.lower()
    if m == "ral":
        return recurrent_adaptive_lasso(dm)[0]
    if m == "stridge":
        return stridge(dm, d_tol)
    raise ValueError(f"unknown method {method!r}")
