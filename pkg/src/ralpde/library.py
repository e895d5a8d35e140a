"""Candidate library construction and the complex-to-real regression transform."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import SPATIAL_AXES, DesignMatrix, Field, TermDescriptor, vectorize
from .smoothdiff import DerivativeSet

MAX_DEGREE = 5
MAX_ORDER = 5


@dataclass(frozen=True)
class LibrarySpec:
    """Which candidate terms to build.

    ``coordinates`` adds spatial coordinates (e.g. ``("x",)``) as extra
    monomial factors of total degree up to ``coord_degree``; this is how
    position-dependent potentials such as x^2*u enter.  Field degree and
    coordinate degree are capped separately.
    """

    d_max: int = 3
    r_max: int = 3
    include_constant: bool = True
    fields: tuple[str, ...] = ("u",)
    n_spatial: int = 1
    coordinates: tuple[str, ...] = ()
    coord_degree: int = 2
    whitelist: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.d_max <= MAX_DEGREE:
            raise ValueError(f"d_max must be in 1..{MAX_DEGREE}")
        if not 1 <= self.r_max <= MAX_ORDER:
            raise ValueError(f"r_max must be in 1..{MAX_ORDER}")
        if not self.fields:
            raise ValueError("library needs at least one field")
        if self.n_spatial not in (1, 2):
            raise ValueError("n_spatial must be 1 or 2")
        axes = SPATIAL_AXES[: self.n_spatial]
        if any(c not in axes for c in self.coordinates):
            raise ValueError(f"coordinates must be drawn from {axes}")
        if len(set(self.fields) | set(self.coordinates)) != len(self.fields) + len(self.coordinates):
            raise ValueError("field and coordinate names must be distinct")
        if self.coordinates and not 1 <= self.coord_degree <= MAX_DEGREE:
            raise ValueError(f"coord_degree must be in 1..{MAX_DEGREE}")

    @property
    def axes(self) -> tuple[str, ...]:
        return SPATIAL_AXES[: self.n_spatial]

    def to_dict(self) -> dict:
        return {
            "d_max": self.d_max, "r_max": self.r_max,
            "include_constant": self.include_constant, "fields": list(self.fields),
            "n_spatial": self.n_spatial, "coordinates": list(self.coordinates),
            "coord_degree": self.coord_degree,
            "whitelist": None if self.whitelist is None else list(self.whitelist),
        }


def _monomials(symbols: tuple[str, ...], degree: int) -> list[tuple[tuple[str, int], ...]]:
    out = []
    for combo in itertools.combinations_with_replacement(range(len(symbols)), degree):
        counts = np.bincount(combo, minlength=len(symbols))
        out.append(tuple((symbols[i], int(c)) for i, c in enumerate(counts) if c))
    return out


def _all_monomials(spec: LibrarySpec) -> list[tuple[tuple[str, int], ...]]:
    """Coordinate factors (written first) times field factors, constant included."""
    field_monos = [m for d in range(spec.d_max + 1) for m in _monomials(tuple(spec.fields), d)]
    if not spec.coordinates:
        return field_monos
    coord_monos = [
        m for d in range(spec.coord_degree + 1) for m in _monomials(tuple(spec.coordinates), d)
    ]
    return [c + f for f in field_monos for c in coord_monos]


def _sort_key(t: TermDescriptor) -> tuple:
    if t.derivative is None:
        return (0, t.degree, 0, "", t.name)
    return (1, t.degree, t.deriv_order, t.derivative[1], t.name)


def enumerate_terms(spec: LibrarySpec) -> list[TermDescriptor]:
    monos = _all_monomials(spec)
    terms = [TermDescriptor(m) for m in monos if m]
    if spec.include_constant:
        terms.append(TermDescriptor())
    for fld in spec.fields:
        for axis in spec.axes:
            for order in range(1, spec.r_max + 1):
                terms.extend(TermDescriptor(m, (fld, axis, order)) for m in monos)
    terms.sort(key=_sort_key)
    if spec.whitelist is not None:
        by_name = {t.name: t for t in terms}
        missing = [n for n in spec.whitelist if n not in by_name]
        if missing:
            raise ValueError(f"whitelisted terms not in library: {missing}")
        keep = set(spec.whitelist)
        terms = [t for t in terms if t.name in keep]
    return terms


def term_count(spec: LibrarySpec) -> int:
    """Closed-form size of the unfiltered library."""
    from math import comb

    n_monos = comb(len(spec.fields) + spec.d_max, spec.d_max)
    if spec.coordinates:
        n_monos *= comb(len(spec.coordinates) + spec.coord_degree, spec.coord_degree)
    n_derivs = len(spec.fields) * spec.n_spatial * spec.r_max
    return (n_monos - 1) + int(spec.include_constant) + n_derivs * n_monos


def _grid_index(shape: tuple[int, ...]) -> np.ndarray:
    idx = np.indices(shape)
    return np.stack([vectorize_array(a) for a in idx], axis=1)


def vectorize_array(a: np.ndarray) -> np.ndarray:
    return a.ravel(order="F")


def assemble(
    derivs: DerivativeSet | Mapping[str, DerivativeSet],
    spec: LibrarySpec,
    target: str | None = None,
    trim_edges: bool = False,
) -> DesignMatrix:
    """Build the design matrix; rows with any non-finite entry are dropped.

    With ``trim_edges`` the grid points inside each DerivativeSet's edge
    margins are left out as well (their count goes to
    ``meta["edge_rows_trimmed"]``).
    """
    if isinstance(derivs, DerivativeSet):
        if len(spec.fields) != 1:
            raise ValueError("pass a mapping of field name -> DerivativeSet for multi-field libraries")
        derivs = {spec.fields[0]: derivs}
    missing = [f for f in spec.fields if f not in derivs]
    if missing:
        raise ValueError(f"no derivatives for fields {missing}")
    target = spec.fields[0] if target is None else target
    ref: Field = derivs[target].smoothed
    shape = ref.shape
    for name, ds in derivs.items():
        if ds.smoothed.shape != shape:
            raise ValueError(f"field {name!r} has shape {ds.smoothed.shape}, expected {shape}")

    def base(sym: str) -> np.ndarray:
        if sym in derivs:
            return vectorize(derivs[sym].smoothed)
        coords = ref.coords(sym)
        ax = ref.axis_index(sym)
        view = [1] * len(shape)
        view[ax] = shape[ax]
        return vectorize_array(np.broadcast_to(coords.reshape(view), shape))

    terms = enumerate_terms(spec)
    cache: dict[str, np.ndarray] = {}
    cols = []
    for t in terms:
        col = np.ones(int(np.prod(shape)))
        for sym, deg in t.monomial:
            if sym not in cache:
                cache[sym] = base(sym)
            col = col * cache[sym] ** deg
        if t.derivative is not None:
            fld, axis, order = t.derivative
            try:
                d = derivs[fld].get(axis, order)
            except KeyError as exc:
                raise ValueError(str(exc)) from None
            col = col * vectorize(d)
        cols.append(col)
    X = np.column_stack(cols)
    y = vectorize(derivs[target].get("t", 1))
    rows = _grid_index(shape)
    ok = np.all(np.isfinite(X), axis=1) & np.isfinite(y)
    dropped = int(np.size(ok) - np.count_nonzero(ok))
    inner = np.ones(len(rows), dtype=bool)
    if trim_edges:
        for ds in derivs.values():
            for axis, m in ds.margins.items():
                ax = ref.axis_index(axis)
                inner &= (rows[:, ax] >= m) & (rows[:, ax] < shape[ax] - m)
    trimmed = int(np.count_nonzero(ok & ~inner))
    keep = ok & inner
    if not keep.all():
        X, y, rows = X[keep], y[keep], rows[keep]
    if X.shape[0] == 0:
        raise ValueError("no rows left after filtering")
    return DesignMatrix(
        X, tuple(terms), y, rows, target=f"{target}_t", dropped_rows=dropped,
        meta={"library": spec.to_dict(), "shape": list(shape), "edge_rows_trimmed": trimmed},
    )


def subsample_rows(dm: DesignMatrix, n: int, seed: int) -> DesignMatrix:
    """Uniform sample of ``n`` rows without replacement (kept in original order)."""
    if not 1 <= n <= dm.n_rows:
        raise ValueError(f"sample size {n} not in [1, {dm.n_rows}]")
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(dm.n_rows, size=n, replace=False))
    return dm.take_rows(rows)


def log_grid(lo_exp: float, hi_exp: float, step: float = 0.2) -> list[int]:
    """Sample sizes ``round(10**e)`` for e = lo_exp, lo_exp + step, ..., hi_exp."""
    count = int(round((hi_exp - lo_exp) / step)) + 1
    return [int(round(10 ** (lo_exp + i * step))) for i in range(count)]


def complexify(dm: DesignMatrix) -> DesignMatrix:
    """Rewrite a complex regression as a real one of twice the size.

    Observation i becomes rows (Re, Im); term j becomes columns for the real
    and imaginary parts of its coefficient.
    """
    if not dm.is_complex:
        raise ValueError("design matrix is already real")
    X = np.asarray(dm.X, dtype=np.complex128)
    y = np.asarray(dm.y, dtype=np.complex128)
    n, p = X.shape
    R = np.empty((2 * n, 2 * p))
    R[0::2, 0::2] = X.real
    R[0::2, 1::2] = -X.imag
    R[1::2, 0::2] = X.imag
    R[1::2, 1::2] = X.real
    Y = np.empty(2 * n)
    Y[0::2] = y.real
    Y[1::2] = y.imag
    terms = tuple(t.with_part(part) for t in dm.terms for part in ("re", "im"))
    meta = dict(dm.meta, complexified=True)
    return DesignMatrix(
        R, terms, Y, np.repeat(dm.row_index, 2, axis=0), dm.target, dm.dropped_rows, meta,
    )
