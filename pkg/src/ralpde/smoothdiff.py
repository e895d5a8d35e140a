"""Gaussian-blur reference smoothing and Savitzky-Golay differentiation.

The filter hyperparameters are chosen automatically: the (1, 2, 1)-blurred
data serves as the reference and the (order, window) pair whose plain
smoothing output is closest to it in mean squared error wins.  Derivatives
are then taken from the blurred data with the selected window.

The tuning only sees smoothing output, where orders 2m and 2m+1 give the
same weights, so it says little about the polynomial order a derivative
needs.  A k-th derivative read off a degree-k fit is the crudest estimator
in the family; by default the fit degree is raised to at least k + 2
(``order_margin``).  ``order_margin=0`` keeps the tuned order as is.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy.ndimage import correlate1d

from .core import Field

log = logging.getLogger(__name__)

ORDERS = (2, 3, 4, 5, 6)
MAX_WINDOW = 51
MAX_DERIV_ORDER = 5
ORDER_MARGIN = 2
_TIE_RTOL = 1e-9
# scores closer than this (relative to the signal's mean square) are roundoff
_ROUNDOFF = 64 * np.finfo(np.float64).eps

_BLUR_KERNEL = np.array([1.0, 2.0, 1.0]) / 4.0


def min_window(order: int) -> int:
    return order + 1 + order % 2


@dataclass(frozen=True)
class SGConfig:
    """Savitzky-Golay filter settings along one grid axis."""

    order: int
    window: int
    axis: str = "x"
    deriv: int = 0
    step: float = 1.0

    def validate(self, n: int | None = None) -> None:
        if self.order < 2:
            raise ValueError(f"polynomial order must be >= 2, got {self.order}")
        if self.window % 2 != 1:
            raise ValueError(f"window length must be odd, got {self.window}")
        if self.window < min_window(self.order):
            raise ValueError(
                f"window {self.window} too short for order {self.order} "
                f"(needs >= {min_window(self.order)})"
            )
        if n is not None and self.window > n - 1:
            raise ValueError(f"window {self.window} exceeds axis length - 1 = {n - 1}")
        if not 0 <= self.deriv <= self.order:
            raise ValueError(f"derivative order {self.deriv} not in [0, {self.order}]")
        if not self.step > 0:
            raise ValueError("step must be positive")


def _apply_real_imag(func, values: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(values):
        return func(values.real) + 1j * func(values.imag)
    return func(values)


def gaussian_blur(field: Field) -> Field:
    """Separable (1, 2, 1)/4 blur over every axis, including time.

    Edges are padded by mirroring about the boundary sample (the edge sample
    itself is not repeated).
    """
    if min(field.shape) < 3:
        raise ValueError(f"every axis needs at least 3 samples, got shape {field.shape}")

    def blur(a: np.ndarray) -> np.ndarray:
        for ax in range(a.ndim):
            a = correlate1d(a, _BLUR_KERNEL, axis=ax, mode="mirror")
        return a

    return field.with_values(_apply_real_imag(blur, field.values))


@lru_cache(maxsize=4096)
def _fit_weights(order: int, window: int, deriv: int, at: int) -> np.ndarray:
    """Weights over window samples 0..window-1 giving the deriv-th derivative
    (unit step) at sample position ``at`` of the least-squares polynomial."""
    half = (window - 1) / 2
    pos = (np.arange(window) - at) / half
    A = np.vander(pos, order + 1, increasing=True)
    pinv = np.linalg.pinv(A)
    w = math.factorial(deriv) * pinv[deriv] / half**deriv
    w.setflags(write=False)
    return w


def sg_coefficients(cfg: SGConfig) -> np.ndarray:
    """Centered filter weights; ``sum(w[k] * f[i + k - h])`` is the estimate at i."""
    cfg.validate()
    h = (cfg.window - 1) // 2
    return _fit_weights(cfg.order, cfg.window, cfg.deriv, h) / cfg.step**cfg.deriv


def _sg_real(values: np.ndarray, ax: int, cfg: SGConfig) -> np.ndarray:
    n = values.shape[ax]
    l, h = cfg.window, (cfg.window - 1) // 2
    scale = cfg.step**cfg.deriv
    out = correlate1d(values, sg_coefficients(cfg), axis=ax, mode="constant")
    moved = np.moveaxis(values, ax, 0)
    res = np.moveaxis(out, ax, 0)
    head = np.stack([_fit_weights(cfg.order, l, cfg.deriv, i) for i in range(h)]) / scale
    tail = np.stack([_fit_weights(cfg.order, l, cfg.deriv, i) for i in range(l - h, l)]) / scale
    res[:h] = np.tensordot(head, moved[:l], axes=(1, 0))
    res[n - h:] = np.tensordot(tail, moved[n - l:], axes=(1, 0))
    return out


def sg_apply(field: Field, cfg: SGConfig) -> Field:
    """Filter along ``cfg.axis``; edge samples use the nearest full window."""
    ax = field.axis_index(cfg.axis)
    cfg.validate(field.shape[ax])
    return field.with_values(_apply_real_imag(lambda a: _sg_real(a, ax, cfg), field.values))


def candidate_grid(n: int, min_order: int = 2) -> Iterator[tuple[int, int]]:
    """Admissible (order, window) pairs for an axis of length n."""
    for o in ORDERS:
        if o < min_order:
            continue
        for l in range(min_window(o), min(n - 1, MAX_WINDOW) + 1, 2):
            yield o, l


def _interior_mse(noisy: np.ndarray, reference: np.ndarray, ax: int, o: int, l: int) -> float:
    h = (l - 1) // 2
    w = _fit_weights(o, l, 0, h)
    sm = correlate1d(noisy, w, axis=ax, mode="constant")
    sl = [slice(None)] * noisy.ndim
    sl[ax] = slice(h, noisy.shape[ax] - h)
    diff = sm[tuple(sl)] - reference[tuple(sl)]
    return float(np.mean(diff * diff))


def tuning_scores(
    noisy: Field, axis: str, min_order: int = 2, reference: Field | None = None
) -> dict[tuple[int, int], float]:
    """Interior MSE against the blurred reference for every admissible pair."""
    ax = noisy.axis_index(axis)
    if reference is None:
        reference = gaussian_blur(noisy)
    a, ref = noisy.values, reference.values
    if np.iscomplexobj(a):
        a = np.abs(a)
        ref = gaussian_blur(noisy.with_values(a)).values
    return {
        (o, l): _interior_mse(a, ref, ax, o, l)
        for o, l in candidate_grid(noisy.shape[ax], min_order)
    }


def mse_floor(values: np.ndarray) -> float:
    """Smallest meaningful tuning score for data of this magnitude."""
    return float(_ROUNDOFF**2 * np.mean(np.abs(values) ** 2))


def select_best(scores: dict[tuple[int, int], float], atol: float = 0.0) -> tuple[int, int]:
    """Argmin with near-ties broken by smallest window, then smallest order.

    Scores within ``atol`` of the minimum (see :func:`mse_floor`) count as
    tied, so exactly representable data does not pick a window by roundoff.
    """
    best = min(scores.values())
    tied = [k for k, v in scores.items() if v <= best * (1 + _TIE_RTOL) + atol + 1e-300]
    o, l = min(tied, key=lambda k: (k[1], k[0]))
    return o, l


def auto_tune_sg(
    noisy: Field, axis: str, min_order: int = 2, reference: Field | None = None
) -> tuple[int, int]:
    """Pick (order, window) for ``axis`` by matching the blurred data.

    Complex data is tuned on its magnitude.
    """
    n = noisy.shape[noisy.axis_index(axis)]
    if n < 5:
        raise ValueError(f"axis {axis!r} has {n} samples; need at least 5")
    scores = tuning_scores(noisy, axis, min_order, reference)
    if not scores:
        raise ValueError(f"axis {axis!r} of length {n} admits no order >= {min_order}")
    return select_best(scores, mse_floor(noisy.values))


@dataclass
class DerivativeSet:
    """Blurred field plus its derivatives keyed by ``(axis, order)``.

    ``margins[axis]`` counts the samples at each end of that axis whose
    estimates rely on one-sided windows or on the blur's mirrored edge.
    """

    smoothed: Field
    derivs: dict[tuple[str, int], Field]
    tuned: dict[str, tuple[int, int]]
    configs: dict[tuple[str, int], SGConfig] = field(default_factory=dict)
    margins: dict[str, int] = field(default_factory=dict)

    def get(self, axis: str, order: int) -> Field:
        if order == 0:
            return self.smoothed
        try:
            return self.derivs[(axis, order)]
        except KeyError:
            raise KeyError(f"derivative of order {order} along {axis!r} not computed") from None

    @property
    def max_order(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for axis, order in self.derivs:
            out[axis] = max(out.get(axis, 0), order)
        return out


def derivative_config(
    scores: dict[tuple[int, int], float], tuned: tuple[int, int], k: int, n: int,
    axis: str, step: float, order_margin: int = ORDER_MARGIN, atol: float = 0.0,
) -> SGConfig:
    """Filter for the k-th derivative given the tuned (order, window).

    A tuned order below k triggers a re-tune restricted to orders >= k.  The
    fit degree is then raised to ``k + order_margin`` if lower, widening the
    window only as far as the new degree requires.
    """
    o, l = tuned
    if k > o:
        log.info("order %d exceeds tuned order %d on axis %s; re-tuning", k, o, axis)
        sub = {key: v for key, v in scores.items() if key[0] >= k}
        if not sub:
            raise ValueError(f"axis {axis!r} too short for derivative order {k}")
        o, l = select_best(sub, atol)
    o = max(o, k + order_margin)
    l = max(l, min_window(o))
    if l > n - 1:
        raise ValueError(f"axis {axis!r} of length {n} too short for a degree-{o} fit")
    return SGConfig(o, l, axis, k, step)


def compute_derivatives(
    noisy: Field, max_x_order: int = 3, include_t: bool = True,
    order_margin: int = ORDER_MARGIN,
) -> DerivativeSet:
    """Blur, tune per axis, then differentiate the blurred data."""
    if not 1 <= max_x_order <= MAX_DERIV_ORDER:
        raise ValueError(f"max_x_order must be in 1..{MAX_DERIV_ORDER}")
    if order_margin < 0:
        raise ValueError("order_margin must be >= 0")
    blurred = gaussian_blur(noisy)
    axes = ["x", "y"][: noisy.n_spatial]
    tuned: dict[str, tuple[int, int]] = {}
    derivs: dict[tuple[str, int], Field] = {}
    configs: dict[tuple[str, int], SGConfig] = {}
    margins: dict[str, int] = {}
    floor = mse_floor(noisy.values)

    def run(axis: str, orders: range) -> None:
        ax = noisy.axis_index(axis)
        n = noisy.shape[ax]
        scores = tuning_scores(noisy, axis, reference=blurred)
        tuned[axis] = select_best(scores, floor)
        half = 0
        for k in orders:
            cfg = derivative_config(scores, tuned[axis], k, n, axis, noisy.spacing[ax],
                                    order_margin, floor)
            configs[(axis, k)] = cfg
            derivs[(axis, k)] = sg_apply(blurred, cfg)
            half = max(half, (cfg.window - 1) // 2)
        # one extra sample for the mirrored blur at the edge
        margins[axis] = half + 1

    if include_t:
        run("t", range(1, 2))
    for axis in axes:
        run(axis, range(1, max_x_order + 1))
    return DerivativeSet(blurred, derivs, tuned, configs, margins)
