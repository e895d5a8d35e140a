"""Benchmark protocols: success-rate sweeps over SNR or sample size, the
white-noise robustness study, and their CSV / SVG outputs.

A trial is scored by support and sign only; coefficient magnitudes are
reported but never compared.  Every trial is seeded by
``base_seed + trial_index`` so sweeps are reproducible, and a trial that
raises is recorded as a failure rather than aborting the sweep.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.special import betainc

from .core import DesignMatrix, SparseModel, parse_term
from .datagen import GroundTruth, SystemSpec, default_library, design_from_field, generate, make_trial
from .library import LibrarySpec, complexify
from .regress import identify, ols

log = logging.getLogger(__name__)

SWEEPS = ("snr", "samplesize", "whitenoise")
METHODS = ("RAL", "STRidge")
CATEGORIES = ("null", "ODE", "Transport", "Heat", "OtherParsimonious", "NonParsimonious")
PARSIMONY_LIMIT = 3
SIGNIFICANCE = 0.05
DESK_SNR_GRID = (0.0, 10.0, 20.0, 30.0, 40.0, 60.0, math.inf)
FULL_SNR_GRID = tuple(float(v) for v in range(0, 62, 2)) + (math.inf,)
WHITENOISE_FULL = (2000, 1000)
WHITENOISE_DESK = (500, 250)
TABLE1_LIBRARIES = (3, 4, 5)


# ----------------------------------------------------------------------------
# scoring


def models_match(model: SparseModel, truth: GroundTruth) -> bool:
    """Exact support match with matching coefficient signs."""
    if not truth.terms:
        raise ValueError("ground truth is empty; nothing to match")
    if model.support != truth.names:
        return False
    return all(
        np.sign(model.coefficients[name]) == np.sign(coef) for name, coef in truth.terms.items()
    )


def classify_model(model: SparseModel, field_name: str = "u") -> str:
    """Parsimony category of a single-field 1D model."""
    support = sorted(model.support)
    if not support:
        return "null"
    if len(support) == 1:
        t = parse_term(support[0])
        if t.derivative is None and t.monomial and all(s == field_name for s, _ in t.monomial):
            return "ODE"
        if t.monomial == () and t.derivative == (field_name, "x", 1):
            return "Transport"
        if t.monomial == () and t.derivative == (field_name, "x", 2):
            return "Heat"
    if len(support) <= PARSIMONY_LIMIT:
        return "OtherParsimonious"
    return "NonParsimonious"


def f_sf(f_stat: float, d1: int, d2: int) -> float:
    """Upper tail P(F > f_stat) of the F(d1, d2) distribution."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if f_stat <= 0:
        return 1.0
    if math.isinf(f_stat):
        return 0.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f_stat)))


@dataclass(frozen=True)
class FTest:
    """Overall-regression F test of a model against the intercept-only fit."""

    f_stat: float
    p_value: float
    k: int
    df_resid: int
    exact_fit: bool = False

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE


def f_test(model: SparseModel, dm: DesignMatrix) -> FTest:
    """OLS refit of ``model``'s support (plus an intercept) vs the mean.

    ``F = ((RSS0 - RSS1) / k) / (RSS1 / (n - k - 1))`` with ``k`` the number of
    non-constant support terms.  An exact fit (RSS1 = 0) gives ``p = 0``.
    """
    if dm.is_complex:
        dm = complexify(dm)
    names = dm.names
    missing = [t for t in model.support if t not in names]
    if missing:
        raise ValueError(f"model terms not in design matrix: {missing}")
    cols = [names.index(t) for t in sorted(model.support) if parse_term(t).is_constant is False]
    k = len(cols)
    n = dm.n_rows
    if n <= k + 1:
        raise ValueError(f"need more than {k + 1} rows for an F test, got {n}")
    y = np.asarray(dm.y, dtype=np.float64)
    rss0 = float(np.sum((y - y.mean()) ** 2))
    if k == 0:
        return FTest(0.0, 1.0, 0, n - 1)
    A = np.column_stack([np.ones(n), np.asarray(dm.X, dtype=np.float64)[:, cols]])
    _, rss1, _ = ols(A, y)
    df = n - k - 1
    if rss1 <= 1e-28 * max(rss0, 1e-300):
        return FTest(math.inf, 0.0, k, df, exact_fit=True)
    f_stat = ((rss0 - rss1) / k) / (rss1 / df)
    return FTest(float(f_stat), f_sf(f_stat, k, df), k, df)


# ----------------------------------------------------------------------------
# experiment description


def _normalize_method(method: str) -> str:
    for m in METHODS:
        if method.lower() == m.lower():
            return m
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep: one system, one method, a grid of SNRs (dB) or sample sizes.

    ``params`` overrides system parameters; ``library`` defaults to the
    system's benchmark library.
    """

    system: str
    sweep: str
    grid: tuple[float, ...]
    trials: int = 10
    base_seed: int = 0
    method: str = "RAL"
    d_tol: float = 2.0
    library: LibrarySpec | None = None
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if self.sweep not in ("snr", "samplesize"):
            raise ValueError("run_sweep handles 'snr' and 'samplesize'; use whitenoise_study")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.grid:
            raise ValueError("grid must not be empty")
        grid = tuple(float(g) for g in self.grid)
        if self.sweep == "samplesize" and any(not (g >= 1 and g == int(g)) for g in grid):
            raise ValueError("sample sizes must be positive integers")
        if any(math.isnan(g) for g in grid):
            raise ValueError("grid values must not be NaN")
        if not self.d_tol > 0:
            raise ValueError("d_tol must be positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "method", _normalize_method(self.method))
        system_spec = SystemSpec(self.system, self.params)
        system_spec.resolved()
        if system_spec.system == "whitenoise":
            raise ValueError("white noise has no true model; use whitenoise_study")
        object.__setattr__(self, "system", system_spec.system)
        object.__setattr__(self, "params", system_spec.params)
        if self.library is None:
            object.__setattr__(self, "library", default_library(self.system))

    @property
    def system_spec(self) -> SystemSpec:
        return SystemSpec(self.system, self.params)

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system, "sweep": self.sweep, "grid": list(self.grid),
            "trials": self.trials, "base_seed": self.base_seed, "method": self.method,
            "d_tol": self.d_tol, "library": self.library.to_dict(), "params": dict(self.params),
        }


@dataclass
class TrialRecord:
    """Outcome of one trial.  ``wall_time`` is excluded from equality."""

    grid_value: float
    trial: int
    seed: int
    success: bool
    support: list[str]
    coefficients: dict[str, float]
    category: str
    p_value: float
    significant: bool
    n_rows: int
    error: str = ""
    wall_time: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class GridSummary:
    grid_value: float
    successes: int
    trials: int
    failures: int

    @property
    def eta(self) -> float:
        return self.successes / self.trials


@dataclass
class ResultTable:
    spec: ExperimentSpec
    records: list[TrialRecord]

    def summary(self) -> list[GridSummary]:
        out = []
        for g in self.spec.grid:
            rs = [r for r in self.records if r.grid_value == g]
            out.append(GridSummary(
                g, sum(r.success for r in rs), len(rs), sum(bool(r.error) for r in rs),
            ))
        return out

    def eta(self) -> dict[float, float]:
        return {s.grid_value: s.eta for s in self.summary()}

    def to_csv(self, path: str | Path | None = None, include_timing: bool = False) -> str:
        """Per-trial rows, a blank line, then the per-grid-point summary.

        Wall times vary between runs and are left out unless requested, so
        reruns give byte-identical files.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["grid_value", "trial", "seed", "success", "n_active", "support", "coefficients",
                "category", "p_value", "significant", "n_rows", "error"]
        if include_timing:
            cols.append("wall_time")
        w.writerow(cols)
        for r in self.records:
            coefs = ";".join(f"{k}={v:.17g}" for k, v in r.coefficients.items())
            row = [_fmt_grid(r.grid_value), r.trial, r.seed, int(r.success), len(r.support),
                   ";".join(r.support), coefs, r.category, f"{r.p_value:.6g}",
                   int(r.significant), r.n_rows, r.error]
            if include_timing:
                row.append(f"{r.wall_time:.3f}")
            w.writerow(row)
        w.writerow([])
        w.writerow(["grid_value", "successes", "trials", "failures", "eta"])
        for s in self.summary():
            w.writerow([_fmt_grid(s.grid_value), s.successes, s.trials, s.failures, f"{s.eta:.4f}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _fmt_grid(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:g}"


# ----------------------------------------------------------------------------
# running


def _run_trial(spec: ExperimentSpec, grid_value: float, trial: int) -> TrialRecord:
    seed = spec.base_seed + trial
    start = time.perf_counter()
    kwargs = {"snr_db": grid_value} if spec.sweep == "snr" else {"n_samples": int(grid_value)}
    try:
        dm, truth = make_trial(spec.system_spec, spec.library, trial, spec.base_seed, **kwargs)
        model = identify(dm, spec.method, spec.d_tol)
        success = models_match(model, truth)
        category = classify_model(model, spec.library.fields[0])
        ft = f_test(model, dm)
        rec = TrialRecord(
            grid_value, trial, seed, success, sorted(model.support),
            {k: model.coefficients[k] for k in sorted(model.coefficients)}, category,
            ft.p_value, ft.significant, dm.n_rows,
        )
    except Exception as exc:  # scored as a failed identification
        log.warning("trial %d at %s failed: %s", trial, _fmt_grid(grid_value), exc)
        rec = TrialRecord(grid_value, trial, seed, False, [], {}, "error", math.nan, False, 0,
                          error=f"{type(exc).__name__}: {exc}")
    rec.wall_time = time.perf_counter() - start
    return rec


def _star_trial(args: tuple) -> TrialRecord:
    return _run_trial(*args)


def _map(func, jobs: list[tuple], n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(func, jobs))


def run_sweep(spec: ExperimentSpec, n_jobs: int = 1) -> ResultTable:
    """Run every (grid value, trial) pair; results come back in grid order."""
    jobs = [(spec, g, t) for g in spec.grid for t in range(spec.trials)]
    records = _map(_star_trial, jobs, n_jobs)
    return ResultTable(spec, records)


# ----------------------------------------------------------------------------
# white-noise study


@dataclass(frozen=True)
class WhitenoiseRow:
    sigma: float
    library: int
    method: str
    trials: int
    counts: dict[str, int]
    significant: dict[str, int]
    failures: int

    def percent(self, category: str) -> float:
        return 100.0 * self.counts.get(category, 0) / self.trials


@dataclass
class WhitenoiseTable:
    rows: list[WhitenoiseRow]
    config: dict[str, Any]

    def row(self, sigma: float, library: int, method: str) -> WhitenoiseRow:
        for r in self.rows:
            if r.sigma == sigma and r.library == library and r.method == _normalize_method(method):
                return r
        raise KeyError((sigma, library, method))

    def to_csv(self, path: str | Path | None = None) -> str:
        """One line per (sigma, library, method): percentage and F-significant
        count for every category."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["sigma", "library", "method", "trials", "failures"]
        for c in CATEGORIES:
            head += [f"{c}_pct", f"{c}_significant"]
        w.writerow(head)
        for r in self.rows:
            line: list[Any] = [f"{r.sigma:g}", f"d=r={r.library}", r.method, r.trials, r.failures]
            for c in CATEGORIES:
                line += [f"{r.percent(c):.1f}", r.significant.get(c, 0)]
            w.writerow(line)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _whitenoise_trial(args: tuple) -> list[tuple]:
    sigma, libraries, methods, trial, base_seed, shape, d_tol = args
    seed = base_seed + trial
    out = []
    try:
        fld, _ = generate(SystemSpec.make("whitenoise", seed=seed, sigma=sigma,
                                          nx=shape[0], nt=shape[1]))
    except Exception as exc:
        return [(sigma, d, m, trial, "error", False, f"{type(exc).__name__}: {exc}")
                for d in libraries for m in methods]
    for d in libraries:
        try:
            dm = design_from_field(fld, LibrarySpec(d_max=d, r_max=d))
        except Exception as exc:
            out += [(sigma, d, m, trial, "error", False, f"{type(exc).__name__}: {exc}")
                    for m in methods]
            continue
        for m in methods:
            try:
                model = identify(dm, m, d_tol)
                cat = classify_model(model)
                sig = f_test(model, dm).significant
                out.append((sigma, d, m, trial, cat, sig, ""))
            except Exception as exc:
                log.warning("white-noise trial %d (d=%d, %s) failed: %s", trial, d, m, exc)
                out.append((sigma, d, m, trial, "error", False, f"{type(exc).__name__}: {exc}"))
    return out


def whitenoise_study(
    sigmas: Sequence[float],
    libraries: Sequence[int] = TABLE1_LIBRARIES,
    methods: Sequence[str] = METHODS,
    trials: int = 20,
    base_seed: int = 0,
    desk: bool = True,
    d_tol: float = 2.0,
    n_jobs: int = 1,
    shape: tuple[int, int] | None = None,
) -> WhitenoiseTable:
    """Classify models identified on pure Gaussian noise.

    Libraries are given by their common degree/order (``d_max = r_max``).
    ``desk`` uses 500 x 250 noise grids instead of 2000 x 1000; ``shape``
    overrides both.  The same noise field is shared by every library and
    method within a trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not sigmas or not libraries or not methods:
        raise ValueError("sigmas, libraries and methods must be non-empty")
    if any(not s > 0 for s in sigmas):
        raise ValueError("sigma values must be positive")
    if any(d not in (1, 2, 3, 4, 5) for d in libraries):
        raise ValueError("library degree must be in 1..5")
    methods = tuple(_normalize_method(m) for m in methods)
    if shape is None:
        shape = WHITENOISE_DESK if desk else WHITENOISE_FULL
    jobs = [(float(s), tuple(libraries), methods, t, base_seed, tuple(shape), d_tol)
            for s in sigmas for t in range(trials)]
    results = [r for chunk in _map(_whitenoise_trial, jobs, n_jobs) for r in chunk]
    rows = []
    for s in sigmas:
        for d in libraries:
            for m in methods:
                rs = [r for r in results if r[0] == float(s) and r[1] == d and r[2] == m]
                counts = {c: sum(r[4] == c for r in rs) for c in CATEGORIES}
                sig = {c: sum(r[4] == c and r[5] for r in rs) for c in CATEGORIES}
                fails = sum(r[4] == "error" for r in rs)
                rows.append(WhitenoiseRow(float(s), d, m, trials, counts, sig, fails))
    config = {"sigmas": [float(s) for s in sigmas], "libraries": list(libraries),
              "methods": list(methods), "trials": trials, "base_seed": base_seed,
              "shape": list(shape), "d_tol": d_tol}
    return WhitenoiseTable(rows, config)


# ----------------------------------------------------------------------------
# chart


def _plot_positions(spec: ExperimentSpec) -> tuple[list[float], list[str], bool]:
    grid = list(spec.grid)
    if spec.sweep == "samplesize":
        return grid, [f"{g:g}" for g in grid], True
    finite = [g for g in grid if math.isfinite(g)]
    step = (max(finite) - min(finite)) / max(len(finite) - 1, 1) if len(finite) > 1 else 10.0
    top = max(finite) if finite else 0.0
    pos = [g if math.isfinite(g) else top + max(step, 1.0) for g in grid]
    labels = ["∞" if math.isinf(g) else f"{g:g}" for g in grid]
    return pos, labels, False


def write_chart(tables: Iterable[ResultTable], path: str | Path, title: str | None = None) -> None:
    """Success-rate line chart (one line per table) with the >= 80% band shaded."""
    import matplotlib
    from matplotlib.figure import Figure

    tables = list(tables)
    if not tables:
        raise ValueError("nothing to plot")
    matplotlib.rcParams["svg.hashsalt"] = "ralpde"
    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot(1, 1, 1)
    ax.axhspan(0.8, 1.05, color="tab:green", alpha=0.15, lw=0, label="η ≥ 0.8")
    for tbl in tables:
        pos, labels, logx = _plot_positions(tbl.spec)
        eta = [s.eta for s in tbl.summary()]
        ax.plot(pos, eta, marker="o", label=f"{tbl.spec.system} ({tbl.spec.method})")
        ax.set_xticks(pos)
        ax.set_xticklabels(labels)
        if logx:
            ax.set_xscale("log")
    spec = tables[0].spec
    ax.set_xlabel("SNR (dB)" if spec.sweep == "snr" else "number of samples N")
    ax.set_ylabel("success rate η")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", fontsize="small")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})


def snr_grid(full: bool = False) -> tuple[float, ...]:
    return FULL_SNR_GRID if full else DESK_SNR_GRID


def parse_grid(text: str, sweep: str) -> tuple[float, ...]:
    """Grid from ``"a,b,c"`` or, for sample sizes, ``"1e2:1e4"`` (10^0.2 steps)."""
    from .library import log_grid

    text = text.strip()
    if ":" in text:
        if sweep != "samplesize":
            raise ValueError("range grids are only supported for sample-size sweeps")
        lo, hi = (float(v) for v in text.split(":"))
        if not 0 < lo <= hi:
            raise ValueError(f"bad sample-size range {text!r}")
        return tuple(float(n) for n in log_grid(math.log10(lo), math.log10(hi)))
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok in ("inf", "+inf", "infinity"):
            out.append(math.inf)
        else:
            out.append(float(tok))
    return tuple(out)


__all__ = [
    "models_match", "classify_model", "f_test", "f_sf", "FTest", "ExperimentSpec", "TrialRecord",
    "ResultTable", "GridSummary", "run_sweep", "whitenoise_study", "WhitenoiseTable",
    "WhitenoiseRow", "write_chart", "snr_grid", "parse_grid", "CATEGORIES",
]
