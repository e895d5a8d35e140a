"""Domain types shared across the toolkit and the FLD1 field file format.

Fields are stored as arrays of shape ``(n_x, n_t)`` or ``(n_x, n_y, n_t)``;
rows index space and the last axis is time.  The canonical flattening order
is space-fastest, time-slowest (column-major), which is also the payload
order of FLD1 files and the row order of every design matrix.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "Field",
    "FieldFormatError",
    "TermDescriptor",
    "DesignMatrix",
    "SparseModel",
    "vectorize",
    "unvectorize",
    "field_write",
    "field_read",
    "parse_term",
]

SPATIAL_AXES = ("x", "y")
MAGIC = "FLD1"


class FieldFormatError(ValueError):
    """Raised when an FLD1 file is malformed or inconsistent."""


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of u on a uniform grid.

    ``spacing`` holds ``(dx, dt)`` or ``(dx, dy, dt)``; ``origin`` holds the
    coordinates of grid point ``(0, ..., 0)`` in the same axis order.
    """

    values: np.ndarray
    spacing: tuple[float, ...]
    origin: tuple[float, ...] | None = None
    raw: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if np.iscomplexobj(values):
            values = values.astype(np.complex128, copy=False)
        else:
            values = values.astype(np.float64, copy=False)
        if values.ndim not in (2, 3):
            raise ValueError(f"field must have 2 or 3 axes, got shape {values.shape}")
        if values.size == 0:
            raise ValueError("field must contain at least one point")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != values.ndim:
            raise ValueError(f"expected {values.ndim} spacings, got {len(spacing)}")
        if not all(s > 0 and math.isfinite(s) for s in spacing):
            raise ValueError(f"spacings must be positive and finite: {spacing}")
        origin = self.origin
        origin = (0.0,) * values.ndim if origin is None else tuple(float(o) for o in origin)
        if len(origin) != values.ndim:
            raise ValueError(f"expected {values.ndim} origin coordinates, got {len(origin)}")
        if not self.raw and not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values; set raw=True for ingested data")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def n_spatial(self) -> int:
        return self.values.ndim - 1

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    @property
    def dt(self) -> float:
        return self.spacing[-1]

    def axis_index(self, axis: str) -> int:
        """Array axis for ``'x'``, ``'y'`` or ``'t'``."""
        if axis == "t":
            return self.values.ndim - 1
        names = SPATIAL_AXES[: self.n_spatial]
        if axis not in names:
            raise ValueError(f"axis {axis!r} not present in a {self.n_spatial}-d field")
        return names.index(axis)

    def coords(self, axis: str) -> np.ndarray:
        i = self.axis_index(axis)
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i])

    def with_values(self, values: np.ndarray, raw: bool | None = None) -> "Field":
        return Field(values, self.spacing, self.origin, self.raw if raw is None else raw)


def vectorize(field: Field) -> np.ndarray:
    """Flatten a field space-fastest, then y, then time."""
    return field.values.ravel(order="F")


def unvectorize(vec: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return np.asarray(vec).reshape(tuple(shape), order="F")


def _fmt(v: float) -> str:
    return repr(float(v))


def field_write(field: Field, path: str | Path) -> None:
    ndim = field.n_spatial
    header = [
        MAGIC,
        f"ndim {ndim}",
        "shape " + " ".join(str(n) for n in field.shape),
        "spacing " + " ".join(_fmt(s) for s in field.spacing),
        "origin " + " ".join(_fmt(o) for o in field.origin),
        f"dtype {'complex' if field.is_complex else 'real'}",
        "end",
    ]
    flat = vectorize(field)
    if field.is_complex:
        payload = np.ascontiguousarray(flat, dtype="<c16").view("<f8")
    else:
        payload = np.ascontiguousarray(flat, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(payload.tobytes())


def field_read(path: str | Path, strict: bool = True) -> Field:
    """Read an FLD1 file.

    With ``strict=False`` non-finite samples are allowed and the returned
    field is flagged as raw-ingested.
    """
    blob = Path(path).read_bytes()
    lines: list[str] = []
    pos = 0
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise FieldFormatError("header not terminated by 'end'")
        try:
            line = blob[pos:nl].decode("ascii").strip()
        except UnicodeDecodeError as exc:
            raise FieldFormatError("header is not ASCII") from exc
        pos = nl + 1
        lines.append(line)
        if line == "end":
            break
        if len(lines) > 16:
            raise FieldFormatError("header too long")
    if not lines or lines[0] != MAGIC:
        raise FieldFormatError(f"bad magic/version: {lines[0] if lines else ''!r}")
    entries: dict[str, list[str]] = {}
    for line in lines[1:-1]:
        key, *rest = line.split()
        entries[key] = rest
    try:
        ndim = int(entries["ndim"][0])
        shape = tuple(int(s) for s in entries["shape"])
        spacing = tuple(float(s) for s in entries["spacing"])
        origin = tuple(float(s) for s in entries["origin"])
        dtype = entries["dtype"][0]
    except (KeyError, IndexError, ValueError) as exc:
        raise FieldFormatError(f"incomplete or invalid header: {exc}") from exc
    if ndim not in (1, 2) or len(shape) != ndim + 1:
        raise FieldFormatError(f"shape {shape} inconsistent with ndim {ndim}")
    if any(n <= 0 for n in shape):
        raise FieldFormatError(f"non-positive shape {shape}")
    if dtype not in ("real", "complex"):
        raise FieldFormatError(f"unknown dtype {dtype!r}")
    count = int(np.prod(shape)) * (2 if dtype == "complex" else 1)
    payload = blob[pos:]
    if len(payload) != 8 * count:
        raise FieldFormatError(
            f"payload has {len(payload)} bytes, shape {shape} ({dtype}) needs {8 * count}"
        )
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if dtype == "complex":
        flat = flat.view(np.complex128)
    values = unvectorize(flat, shape)
    finite = bool(np.all(np.isfinite(values)))
    if strict and not finite:
        raise FieldFormatError("payload contains non-finite values")
    try:
        return Field(values.copy(), spacing, origin, raw=not finite)
    except ValueError as exc:
        raise FieldFormatError(str(exc)) from exc


_SYMBOL = re.compile(r"^[A-Za-z][A-Za-z0-9]*$")


@dataclass(frozen=True)
class TermDescriptor:
    """One candidate term: a monomial times at most one derivative factor.

    ``monomial`` lists ``(symbol, degree)`` pairs with positive degrees;
    symbols are field names or spatial coordinates.  ``derivative`` is
    ``(field, axis, order)``.  ``part`` marks the real/imaginary column of a
    complexified library.
    """

    monomial: tuple[tuple[str, int], ...] = ()
    derivative: tuple[str, str, int] | None = None
    part: str | None = None

    def __post_init__(self) -> None:
        for sym, deg in self.monomial:
            if not _SYMBOL.match(sym) or deg < 1:
                raise ValueError(f"bad monomial factor {(sym, deg)}")
        if self.derivative is not None:
            fld, axis, order = self.derivative
            if not _SYMBOL.match(fld) or axis not in SPATIAL_AXES or order < 1:
                raise ValueError(f"bad derivative factor {self.derivative}")
        if self.part not in (None, "re", "im"):
            raise ValueError(f"bad part {self.part!r}")

    @property
    def degree(self) -> int:
        return sum(d for _, d in self.monomial)

    @property
    def deriv_order(self) -> int:
        return 0 if self.derivative is None else self.derivative[2]

    @property
    def is_constant(self) -> bool:
        return not self.monomial and self.derivative is None

    @property
    def name(self) -> str:
        factors = [s if d == 1 else f"{s}^{d}" for s, d in self.monomial]
        if self.derivative is not None:
            fld, axis, order = self.derivative
            factors.append(f"{fld}_{axis * order}")
        base = "*".join(factors) if factors else "1"
        return base if self.part is None else f"{base}.{self.part}"

    def with_part(self, part: str | None) -> "TermDescriptor":
        return TermDescriptor(self.monomial, self.derivative, part)

    def __str__(self) -> str:
        return self.name


def parse_term(name: str) -> TermDescriptor:
    """Inverse of :attr:`TermDescriptor.name`."""
    part = None
    base = name
    if base.endswith(".re") or base.endswith(".im"):
        base, part = base[:-3], base[-2:]
    if base == "1":
        return TermDescriptor(part=part)
    monomial: list[tuple[str, int]] = []
    derivative = None
    for factor in base.split("*"):
        if "_" in factor:
            if derivative is not None:
                raise ValueError(f"term {name!r} has more than one derivative factor")
            fld, _, axes = factor.partition("_")
            if not axes or len(set(axes)) != 1:
                raise ValueError(f"bad derivative factor {factor!r}")
            derivative = (fld, axes[0], len(axes))
        else:
            sym, _, deg = factor.partition("^")
            monomial.append((sym, int(deg) if deg else 1))
    return TermDescriptor(tuple(monomial), derivative, part)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Vectorized candidate library ``X`` with aligned target ``y``.

    ``row_index`` has one row per observation holding the original grid
    index ``(i_x[, i_y], i_t)``.
    """

    X: np.ndarray
    terms: tuple[TermDescriptor, ...]
    y: np.ndarray
    row_index: np.ndarray
    target: str = "u_t"
    dropped_rows: int = 0
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        X = np.asarray(self.X)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[1] != len(self.terms):
            raise ValueError(f"X shape {X.shape} does not match {len(self.terms)} terms")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y shape {y.shape} does not match {X.shape[0]} rows")
        if len(self.row_index) != X.shape[0]:
            raise ValueError("row_index length does not match row count")
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError("duplicate term names")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.X) or np.iscomplexobj(self.y)

    def take_rows(self, rows: np.ndarray) -> "DesignMatrix":
        return DesignMatrix(
            self.X[rows], self.terms, self.y[rows], self.row_index[rows],
            self.target, self.dropped_rows, dict(self.meta),
        )

    def to_csv(self, path: str | Path) -> None:
        if self.is_complex:
            raise ValueError("complexify the design matrix before CSV export")
        data = np.column_stack([self.y, self.X])
        header = ",".join([self.target, *self.names])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass
class SparseModel:
    """Identified model: nonzero coefficients by term name plus fit statistics."""

    coefficients: dict[str, float]
    rss: float
    n_rows: int
    aic: float
    method: str
    target: str = "u_t"
    null: bool = False
    info: dict[str, Any] = field(default_factory=dict)
    trace: list[dict[str, Any]] | None = None

    @property
    def n_active(self) -> int:
        return len(self.coefficients)

    @property
    def support(self) -> frozenset[str]:
        return frozenset(self.coefficients)

    def equation(self, order: Iterable[str] | None = None, digits: int = 4) -> str:
        """Render as ``u_t = c1*term1 + c2*term2``."""
        names = list(self.coefficients)
        if order is not None:
            rank = {n: i for i, n in enumerate(order)}
            names.sort(key=lambda n: rank.get(n, len(rank)))
        if not names:
            return f"{self.target} = 0"
        parts = []
        for i, n in enumerate(names):
            c = self.coefficients[n]
            coef = f"{abs(c):.{digits}g}" if i else f"{c:.{digits}g}"
            term = "" if n == "1" else f"*{n}"
            if i:
                parts.append(f"{'-' if c < 0 else '+'} {coef}{term}")
            else:
                parts.append(f"{coef}{term}")
        return f"{self.target} = " + " ".join(parts)

    def to_dict(self, include_trace: bool = False) -> dict[str, Any]:
        out = {
            "method": self.method,
            "target": self.target,
            "null": self.null,
            "coefficients": {k: float(v) for k, v in self.coefficients.items()},
            "rss": float(self.rss),
            "n_rows": int(self.n_rows),
            "n_active": self.n_active,
            "aic": float(self.aic),
            "info": self.info,
        }
        if include_trace and self.trace is not None:
            out["trace"] = self.trace
        return out

    def to_json(self, include_trace: bool = False) -> str:
        return json.dumps(self.to_dict(include_trace), indent=2, default=_json_default)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SparseModel":
        return cls(
            coefficients=dict(d["coefficients"]), rss=d["rss"], n_rows=d["n_rows"],
            aic=d["aic"], method=d["method"], target=d.get("target", "u_t"),
            null=d.get("null", False), info=d.get("info", {}), trace=d.get("trace"),
        )


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
