"""Benchmark datasets: analytic solutions, Fourier-spectral RK4 solvers, a
split-step Schrodinger propagator and white noise, plus noisy/subsampled
trial construction.

Every generator returns the field together with the true right-hand side
of ``u_t = ...`` as a term -> coefficient map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Mapping

import numpy as np

from .core import DesignMatrix, Field
from .library import LibrarySpec, assemble, subsample_rows
from .smoothdiff import compute_derivatives

SYSTEMS = ("transport", "heat", "kdv2soliton", "burgers", "cable", "advdiff", "qho", "whitenoise")
ALIASES = {"kdv": "kdv2soliton"}
SUBSTEPS = 10


@dataclass(frozen=True)
class GroundTruth:
    """True PDE as term name -> coefficient; empty for pure noise."""

    terms: Mapping[str, float]

    @property
    def names(self) -> frozenset[str]:
        return frozenset(self.terms)

    def to_dict(self) -> dict[str, float]:
        return dict(self.terms)


@dataclass(frozen=True)
class SystemSpec:
    """Which system to generate, with parameter and grid overrides."""

    system: str
    params: tuple[tuple[str, float], ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        name = ALIASES.get(self.system, self.system)
        if name not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}; choose from {', '.join(SYSTEMS)}")
        object.__setattr__(self, "system", name)
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))

    @classmethod
    def make(cls, system: str, seed: int = 0, **params: float) -> "SystemSpec":
        return cls(system, tuple(params.items()), seed)

    def resolved(self) -> dict[str, float]:
        out = dict(DEFAULTS[self.system])
        unknown = set(dict(self.params)) - set(out)
        if unknown:
            raise ValueError(f"unknown parameters for {self.system}: {sorted(unknown)}")
        out.update(dict(self.params))
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"system": self.system, "params": self.resolved(), "seed": self.seed}


DEFAULTS: dict[str, dict[str, float]] = {
    "transport": dict(c=3.0, x0=-5.0, x1=1.0, dx=0.01, t0=0.0, t1=2.0, dt=0.01),
    "heat": dict(k=10.0, L=5.0, amp=6.0, x0=0.0, x1=5.0, dx=0.01, t0=0.0, t1=1.5, dt=0.01),
    "kdv2soliton": dict(a1=0.5, a2=1.0, B1=1.0, B2=5.0, x0=-30.0, x1=30.0, nx=512,
                        t0=0.0, t1=20.0, nt=201),
    "burgers": dict(nu=0.1, x0=-8.0, x1=8.0, nx=256, t0=0.0, t1=10.0, nt=101),
    "cable": dict(lam=1.0, tau=1.0, x0=-4.0, x1=4.0, dx=0.1, t0=0.0, t1=5.0, dt=0.01),
    "advdiff": dict(D=1.0, vel=1.0, x0=-10.0, x1=10.0, dx=0.1, t0=0.0, t1=10.0, dt=0.01),
    "qho": dict(x0=-7.5, nx=512, dx=15.0 / 512, t0=0.0, t1=10.0, dt=0.025),
    "whitenoise": dict(sigma=1.0, nx=2000, nt=1000),
}

POSITIVE = {"c", "k", "L", "nu", "lam", "tau", "D", "dx", "dt", "sigma", "a1", "a2", "B1", "B2"}


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def _axis_n(lo: float, hi: float, n: float) -> np.ndarray:
    return np.linspace(lo, hi, int(n))


def _check(p: Mapping[str, float]) -> None:
    for k, v in p.items():
        if not math.isfinite(v):
            raise ValueError(f"parameter {k} must be finite")
        if k in POSITIVE and v <= 0:
            raise ValueError(f"parameter {k} must be positive, got {v}")


def _field(u: np.ndarray, x: np.ndarray, t: np.ndarray) -> Field:
    if len(x) < 8 or len(t) < 8:
        raise ValueError("grid needs at least 8 points per axis")
    return Field(u, (float(x[1] - x[0]), float(t[1] - t[0])), (float(x[0]), float(t[0])))


# ----------------------------------------------------------------------------
# analytic solutions


def transport_solution(x: np.ndarray, t: np.ndarray, c: float) -> np.ndarray:
    X, T = np.meshgrid(x, t, indexing="ij")
    return np.exp(-((X + c * T) ** 2))


def heat_solution(x: np.ndarray, t: np.ndarray, k: float, L: float, amp: float = 6.0) -> np.ndarray:
    X, T = np.meshgrid(x, t, indexing="ij")
    return amp * np.sin(np.pi * X / L) * np.exp(-k * (np.pi / L) ** 2 * T)


def kdv_two_soliton(x: np.ndarray, t: np.ndarray, a1: float, a2: float, B1: float, B2: float) -> np.ndarray:
    """``2 d^2/dx^2 ln f`` for the Hirota two-soliton tau function.

    With f = sum_i c_i exp(k_i x + m_i), (ln f)_xx equals
    sum_{i<j} c_i c_j (k_i - k_j)^2 exp(phi_i + phi_j) / f^2, which avoids
    the cancellation in f f_xx - f_x^2.  All exponents are shifted by the
    running maximum before exponentiation.
    """
    X, T = np.meshgrid(x, t, indexing="ij")
    A = ((a1 - a2) / (a1 + a2)) ** 2
    th1 = a1 * X - a1**3 * T
    th2 = a2 * X - a2**3 * T
    slopes = [0.0, a1, a2, a1 + a2]
    logc = [0.0, math.log(B1), math.log(B2), math.log(A * B1 * B2)]
    phis = [np.zeros_like(X), th1, th2, th1 + th2]
    logs = [lc + ph for lc, ph in zip(logc, phis)]
    shift = np.maximum.reduce(logs)
    terms = [np.exp(lg - shift) for lg in logs]
    f = sum(terms)
    num = np.zeros_like(X)
    for i in range(4):
        for j in range(i + 1, 4):
            num += (slopes[i] - slopes[j]) ** 2 * terms[i] * terms[j]
    return 2.0 * num / (f * f)


# ----------------------------------------------------------------------------
# spectral solvers


def wavenumbers(n: int, dx: float) -> np.ndarray:
    return 2 * np.pi * np.fft.rfftfreq(n, d=dx)


def spectral_derivative(u: np.ndarray, dx: float, order: int = 1) -> np.ndarray:
    """Periodic Fourier derivative along the first axis (real input)."""
    n = u.shape[0]
    k = wavenumbers(n, dx)
    shape = (-1,) + (1,) * (u.ndim - 1)
    return np.fft.irfft(((1j * k) ** order).reshape(shape) * np.fft.rfft(u, axis=0), n=n, axis=0)


def rk4_spectral(
    u0: np.ndarray, rhs: Callable[[np.ndarray], np.ndarray], dt: float, n_out: int,
    substeps: int = SUBSTEPS,
) -> np.ndarray:
    """Classical RK4 with ``substeps`` internal steps per output interval."""
    out = np.empty((u0.size, n_out))
    u = u0.astype(np.float64).copy()
    out[:, 0] = u
    h = dt / substeps
    for j in range(1, n_out):
        for _ in range(substeps):
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * h * k1)
            k3 = rhs(u + 0.5 * h * k2)
            k4 = rhs(u + h * k3)
            u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[:, j] = u
    return out


def _substeps(dt: float, dx: float, diffusivity: float) -> int:
    """Internal RK4 steps per output interval, enough for the stiffest
    diffusive mode (RK4 is stable on the negative real axis up to ~2.78)."""
    k_max = math.pi / dx
    return max(SUBSTEPS, math.ceil(dt * abs(diffusivity) * k_max**2 / 2.7))


def _spectral_ops(n: int, dx: float):
    k = wavenumbers(n, dx)
    ik, mk2 = 1j * k, -(k**2)

    def d1(u):
        return np.fft.irfft(ik * np.fft.rfft(u), n=n)

    def d2(u):
        return np.fft.irfft(mk2 * np.fft.rfft(u), n=n)

    return d1, d2


def split_step_qho(x: np.ndarray, t: np.ndarray, psi0: np.ndarray, substeps: int = SUBSTEPS) -> np.ndarray:
    """Strang splitting for u_t = (i/2) u_xx - i (x^2/2) u on a periodic grid."""
    n = len(x)
    dx = x[1] - x[0]
    k = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    h = (t[1] - t[0]) / substeps
    half_pot = np.exp(-0.5j * h * (0.5 * x**2))
    kin = np.exp(-0.5j * h * k**2)
    out = np.empty((n, len(t)), dtype=np.complex128)
    u = psi0.astype(np.complex128)
    out[:, 0] = u
    for j in range(1, len(t)):
        for _ in range(substeps):
            u = half_pot * u
            u = np.fft.ifft(kin * np.fft.fft(u))
            u = half_pot * u
        out[:, j] = u
    return out


# ----------------------------------------------------------------------------


def _gen_transport(p):
    x, t = _axis(p["x0"], p["x1"], p["dx"]), _axis(p["t0"], p["t1"], p["dt"])
    return _field(transport_solution(x, t, p["c"]), x, t), {"u_x": p["c"]}


def _gen_heat(p):
    x, t = _axis(p["x0"], p["x1"], p["dx"]), _axis(p["t0"], p["t1"], p["dt"])
    return _field(heat_solution(x, t, p["k"], p["L"], p["amp"]), x, t), {"u_xx": p["k"]}


def _gen_kdv(p):
    x, t = _axis_n(p["x0"], p["x1"], p["nx"]), _axis_n(p["t0"], p["t1"], p["nt"])
    u = kdv_two_soliton(x, t, p["a1"], p["a2"], p["B1"], p["B2"])
    return _field(u, x, t), {"u*u_x": -6.0, "u_xxx": -1.0}


def _gen_burgers(p):
    x, t = _axis_n(p["x0"], p["x1"], p["nx"]), _axis_n(p["t0"], p["t1"], p["nt"])
    dx = x[1] - x[0]
    d1, d2 = _spectral_ops(len(x), dx)
    nu = p["nu"]
    dt = t[1] - t[0]
    u = rk4_spectral(np.exp(-((x + 2) ** 2)), lambda u: -u * d1(u) + nu * d2(u), dt, len(t),
                     _substeps(dt, dx, nu))
    return _field(u, x, t), {"u*u_x": -1.0, "u_xx": nu}


def _gen_cable(p):
    x, t = _axis(p["x0"], p["x1"], p["dx"]), _axis(p["t0"], p["t1"], p["dt"])
    d1, d2 = _spectral_ops(len(x), x[1] - x[0])
    lam, tau = p["lam"], p["tau"]
    dt = t[1] - t[0]
    u = rk4_spectral(np.exp(-(x**2)), lambda v: (lam**2 * d2(v) - v) / tau, dt, len(t),
                     _substeps(dt, x[1] - x[0], lam**2 / tau))
    return _field(u, x, t), {"u": -1.0 / tau, "u_xx": lam**2 / tau}


def _gen_advdiff(p):
    x, t = _axis(p["x0"], p["x1"], p["dx"]), _axis(p["t0"], p["t1"], p["dt"])
    d1, d2 = _spectral_ops(len(x), x[1] - x[0])
    D, vel = p["D"], p["vel"]
    dt = t[1] - t[0]
    u = rk4_spectral(np.exp(-((x + 2) ** 2)), lambda c: D * d2(c) - vel * d1(c), dt, len(t),
                     _substeps(dt, x[1] - x[0], D))
    return _field(u, x, t), {"u_x": -vel, "u_xx": D}


def _gen_qho(p):
    x = p["x0"] + p["dx"] * np.arange(int(p["nx"]))
    t = _axis(p["t0"], p["t1"], p["dt"])
    u = split_step_qho(x, t, np.exp(-(((x - 1) / 2) ** 2)))
    # u_t = 0.5i u_xx - 0.5i x^2 u, written over the complexified library
    return _field(u, x, t), {"u_xx.im": 0.5, "x^2*u.im": -0.5}


def _gen_whitenoise(p, seed):
    nx, nt = int(p["nx"]), int(p["nt"])
    rng = np.random.default_rng(seed)
    u = p["sigma"] * rng.standard_normal((nx, nt))
    return Field(u, (1.0, 1.0), (0.0, 0.0)), {}


def generate(spec: SystemSpec) -> tuple[Field, GroundTruth]:
    """Build the dataset described by ``spec`` (rows = space, columns = time)."""
    p = spec.resolved()
    _check(p)
    if spec.system == "whitenoise":
        fld, truth = _gen_whitenoise(p, spec.seed)
    else:
        fld, truth = _cached(spec.system, spec.params)
    return fld, GroundTruth(dict(truth))


_GENERATORS = {
    "transport": _gen_transport, "heat": _gen_heat, "kdv2soliton": _gen_kdv,
    "burgers": _gen_burgers, "cable": _gen_cable, "advdiff": _gen_advdiff, "qho": _gen_qho,
}


@lru_cache(maxsize=16)
def _cached(system: str, params: tuple) -> tuple[Field, dict]:
    p = dict(DEFAULTS[system])
    p.update(dict(params))
    return _GENERATORS[system](p)


def default_library(system: str) -> LibrarySpec:
    """Library used for a benchmark system unless overridden."""
    system = ALIASES.get(system, system)
    if system == "qho":
        return LibrarySpec(d_max=2, r_max=2, coordinates=("x",), coord_degree=2)
    return LibrarySpec(d_max=3, r_max=3)


# ----------------------------------------------------------------------------
# noise and trials


def noise_sigma(values: np.ndarray, snr_db: float) -> float:
    """Noise standard deviation for a target SNR in dB."""
    if np.iscomplexobj(values):
        sigma_u = float(np.std(np.concatenate([values.real.ravel(), values.imag.ravel()])))
    else:
        sigma_u = float(np.std(values))
    if sigma_u == 0:
        raise ValueError("cannot set an SNR on a constant field")
    return sigma_u * 10.0 ** (-snr_db / 20.0)


def inject_noise(field: Field, snr_db: float, seed: int) -> Field:
    """Add i.i.d. Gaussian noise at ``snr_db`` = 20 log10(sigma_u / sigma_z)."""
    if math.isinf(snr_db) and snr_db > 0:
        return field
    if math.isnan(snr_db):
        raise ValueError("snr_db must not be NaN")
    sigma = noise_sigma(field.values, snr_db)
    rng = np.random.default_rng(seed)
    noise = sigma * rng.standard_normal(field.shape)
    if field.is_complex:
        noise = noise + 1j * sigma * rng.standard_normal(field.shape)
    return field.with_values(field.values + noise)


def design_from_field(fld: Field, library: LibrarySpec, trim_edges: bool = True) -> DesignMatrix:
    """Differentiate and assemble; benchmark trials drop edge rows."""
    derivs = compute_derivatives(fld, max_x_order=library.r_max)
    return assemble(derivs, library, trim_edges=trim_edges)


@lru_cache(maxsize=8)
def _noiseless_design(spec: SystemSpec, library: LibrarySpec) -> DesignMatrix:
    fld, _ = generate(spec)
    return design_from_field(fld, library)


def make_trial(
    spec: SystemSpec,
    library: LibrarySpec,
    trial_index: int,
    base_seed: int = 0,
    snr_db: float | None = None,
    n_samples: int | None = None,
) -> tuple[DesignMatrix, GroundTruth]:
    """One benchmark dataset; seeded by ``base_seed + trial_index``.

    SNR trials add noise to the full field before differentiation;
    sample-size trials subsample rows of the noiseless design matrix.
    """
    if (snr_db is None) == (n_samples is None):
        raise ValueError("set exactly one of snr_db / n_samples")
    seed = base_seed + trial_index
    fld, truth = generate(spec)
    if n_samples is not None:
        dm = _noiseless_design(spec, library)
        return subsample_rows(dm, int(n_samples), seed), truth
    if math.isinf(snr_db) and snr_db > 0:
        return _noiseless_design(spec, library), truth
    return design_from_field(inject_noise(fld, snr_db, seed), library), truth
