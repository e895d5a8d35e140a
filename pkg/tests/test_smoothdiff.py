import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ralpde.core import Field
from ralpde.datagen import SystemSpec, generate, spectral_derivative
from ralpde.smoothdiff import (
    ORDER_MARGIN,
    SGConfig,
    auto_tune_sg,
    candidate_grid,
    compute_derivatives,
    derivative_config,
    gaussian_blur,
    min_window,
    sg_apply,
    sg_coefficients,
    tuning_scores,
)


def _lsq_weights(order, window, deriv, at, step=1.0):
    """Brute-force oracle: fit a polynomial to unit impulses by lstsq."""
    pos = (np.arange(window) - at) * step
    A = np.vander(pos, order + 1, increasing=True)
    w = np.empty(window)
    for k in range(window):
        e = np.zeros(window)
        e[k] = 1.0
        c = np.linalg.lstsq(A, e, rcond=None)[0]
        w[k] = math.factorial(deriv) * c[deriv]
    return w


def _naive_blur(a):
    """Direct double-loop (1,2,1)x(1,2,1)/16 with mirror padding."""
    k = np.array([1.0, 2.0, 1.0]) / 4
    p = np.pad(a, 1, mode="reflect")
    out = np.zeros_like(a)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out[i, j] = sum(k[di] * k[dj] * p[i + di, j + dj] for di in range(3) for dj in range(3))
    return out


# blur -----------------------------------------------------------------------


def test_blur_constant_field_unchanged():
    f = Field(np.full((6, 5), 3.25), (1.0, 1.0))
    assert np.allclose(gaussian_blur(f).values, 3.25, rtol=0, atol=1e-15)


def test_blur_impulse_gives_kernel():
    a = np.zeros((5, 5))
    a[2, 2] = 1.0
    out = gaussian_blur(Field(a, (1.0, 1.0))).values
    expect = np.outer([1, 2, 1], [1, 2, 1]) / 16
    assert np.array_equal(out[1:4, 1:4], expect)
    assert out.sum() == 1.0


def test_blur_three_by_three_impulse_with_mirror_edges():
    # mirror padding reflects the centre sample into every border cell
    a = np.zeros((3, 3))
    a[1, 1] = 1.0
    out = gaussian_blur(Field(a, (1.0, 1.0))).values
    assert np.array_equal(out, np.full((3, 3), 4 / 16))
    assert np.array_equal(out, _naive_blur(a))


@pytest.mark.xfail(strict=True, reason="zero-padding values; mirror padding differs at edges, see ledger")
def test_blur_three_by_three_impulse_zero_padding_values():
    a = np.zeros((3, 3))
    a[1, 1] = 1.0
    out = gaussian_blur(Field(a, (1.0, 1.0))).values
    assert np.array_equal(out, np.outer([1, 2, 1], [1, 2, 1]) / 16)


def test_blur_matches_naive_convolution(rng):
    a = rng.standard_normal((5, 5))
    assert np.allclose(gaussian_blur(Field(a, (1.0, 1.0))).values, _naive_blur(a), atol=1e-14)


def test_blur_3d_kernel_normalization(rng):
    a = np.zeros((5, 5, 5))
    a[2, 2, 2] = 1.0
    out = gaussian_blur(Field(a, (1.0, 1.0, 1.0))).values
    assert out[2, 2, 2] == 8 / 64 and out[1, 1, 1] == 1 / 64 and out[1, 2, 2] == 4 / 64
    assert math.isclose(out.sum(), 1.0)


@given(st.integers(0, 10_000))
def test_blur_never_amplifies_max_norm(seed):
    a = np.random.default_rng(seed).standard_normal((7, 6))
    out = gaussian_blur(Field(a, (1.0, 1.0))).values
    assert np.abs(out).max() <= np.abs(a).max() + 1e-15


def test_blur_complex_acts_on_parts(rng):
    a = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
    out = gaussian_blur(Field(a, (1.0, 1.0))).values
    assert np.allclose(out.real, _naive_blur(a.real)) and np.allclose(out.imag, _naive_blur(a.imag))


def test_blur_rejects_short_axis():
    with pytest.raises(ValueError):
        gaussian_blur(Field(np.ones((2, 5)), (1.0, 1.0)))


# SG coefficients ------------------------------------------------------------


def test_sg_classic_quadratic_five_point():
    w = sg_coefficients(SGConfig(2, 5))
    assert np.allclose(w, np.array([-3, 12, 17, 12, -3]) / 35, atol=1e-15)


def test_sg_slope_on_ramp():
    w = sg_coefficients(SGConfig(3, 7, deriv=1, step=0.5))
    x = 0.5 * np.arange(-3, 4)
    assert math.isclose(w @ (2.0 * x + 1.0), 2.0, rel_tol=1e-12)


@pytest.mark.parametrize(
    "order,deriv", [(o, k) for o in (2, 3, 4, 5, 6) for k in (0, 1, 2, 3) if k <= o]
)
def test_sg_matches_least_squares_oracle(order, deriv):
    for window in range(min_window(order), 26, 2):
        w = sg_coefficients(SGConfig(order, window, deriv=deriv, step=0.1))
        ref = _lsq_weights(order, window, deriv, (window - 1) // 2, 0.1)
        assert np.allclose(w, ref, rtol=0, atol=1e-10 * max(1.0, np.abs(ref).max()))


@given(st.sampled_from([2, 3, 4, 5, 6]), st.integers(0, 12), st.floats(0.01, 2.0))
def test_sg_moment_identities(order, extra, step):
    window = min_window(order) + 2 * extra
    offsets = (np.arange(window) - (window - 1) // 2) * step
    for k in range(order + 1):
        w = sg_coefficients(SGConfig(order, window, deriv=k, step=step))
        assert math.isclose(w @ offsets**k, math.factorial(k), rel_tol=1e-8)
        if k == 0:
            assert math.isclose(w.sum(), 1.0, rel_tol=1e-12)
        if k == 1:
            assert abs(w.sum()) < 1e-8 / step


@pytest.mark.parametrize("cfg", [
    SGConfig(1, 5), SGConfig(2, 4), SGConfig(3, 3), SGConfig(2, 5, deriv=3), SGConfig(2, 5, step=0.0),
])
def test_sg_config_validation(cfg):
    with pytest.raises(ValueError):
        cfg.validate()


def test_sg_config_window_vs_axis_length():
    with pytest.raises(ValueError):
        SGConfig(2, 5).validate(5)
    SGConfig(2, 5).validate(6)


# SG application -------------------------------------------------------------


@given(st.sampled_from([2, 3, 4, 5, 6]), st.integers(0, 2), st.integers(0, 10_000))
def test_sg_reproduces_polynomials_everywhere(order, deriv, seed):
    rng = np.random.default_rng(seed)
    coefs = rng.uniform(-1, 1, order + 1)
    x = np.linspace(-1, 1, 40)
    dx = x[1] - x[0]
    poly = np.polynomial.Polynomial(coefs)
    vals = np.tile(poly(x)[:, None], (1, 3))
    window = min_window(order) + 4
    out = sg_apply(Field(vals, (dx, 1.0)), SGConfig(order, window, "x", deriv, dx)).values[:, 0]
    ref = poly.deriv(deriv)(x) if deriv else poly(x)
    # edges use asymmetric fits of the same degree, so they are exact too
    assert np.allclose(out, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max() + 1e-9)


def test_sg_sine_derivative():
    x = np.arange(0, 10, 0.01)
    f = Field(np.tile(np.sin(x)[:, None], (1, 5)), (0.01, 1.0))
    d = sg_apply(f, SGConfig(4, 21, "x", 1, 0.01)).values[10:-10, 0]
    assert np.max(np.abs(d - np.cos(x[10:-10]))) < 1e-5


def test_sg_second_derivative_on_heat_solution():
    f, _ = generate(SystemSpec.make("heat"))
    x = f.coords("x")[:, None]
    t = f.coords("t")[None, :]
    uxx = -6 * (np.pi / 5) ** 2 * np.sin(np.pi * x / 5) * np.exp(-10 * (np.pi / 5) ** 2 * t)
    d = sg_apply(f, SGConfig(4, 21, "x", 2, 0.01)).values
    assert np.max(np.abs(d - uxx)[10:-10]) / np.max(np.abs(uxx)) < 1e-4


def test_sg_apply_is_linear(rng):
    a = Field(rng.standard_normal((30, 8)), (0.1, 0.2))
    b = Field(rng.standard_normal((30, 8)), (0.1, 0.2))
    cfg = SGConfig(3, 7, "t", 1, 0.2)
    lhs = sg_apply(a.with_values(2.0 * a.values - 3.0 * b.values), cfg).values
    rhs = 2.0 * sg_apply(a, cfg).values - 3.0 * sg_apply(b, cfg).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_sg_apply_along_y_axis(rng):
    y = np.linspace(0, 1, 20)
    vals = np.broadcast_to((3 * y**2)[None, :, None], (4, 20, 3)).copy()
    dy = y[1] - y[0]
    out = sg_apply(Field(vals, (1.0, dy, 1.0)), SGConfig(2, 7, "y", 1, dy)).values
    assert np.allclose(out[2, :, 1], 6 * y, atol=1e-10)


# tuning ---------------------------------------------------------------------


def test_candidate_grid_bounds():
    grid = list(candidate_grid(200))
    assert (2, 3) in grid and (6, 51) in grid and (6, 5) not in grid and (3, 3) not in grid
    assert all(l % 2 == 1 and min_window(o) <= l <= 51 for o, l in grid)
    assert max(l for _, l in candidate_grid(20)) == 19


def test_axis_length_five_only_admits_order_two():
    # l <= n - 1 = 4 leaves (2, 3) as the single candidate
    f = Field(np.random.default_rng(0).standard_normal((5, 9)), (1.0, 1.0))
    assert list(candidate_grid(5)) == [(2, 3)]
    assert auto_tune_sg(f, "x") == (2, 3)


def test_axis_shorter_than_five_rejected():
    with pytest.raises(ValueError):
        auto_tune_sg(Field(np.ones((4, 9)), (1.0, 1.0)), "x")


def test_tune_matches_exhaustive_search():
    x = np.linspace(0, 2 * np.pi, 120)
    rng = np.random.default_rng(7)
    vals = np.sin(x)[:, None] * np.ones((1, 12)) + 0.01 * rng.standard_normal((120, 12))
    f = Field(vals, (x[1] - x[0], 1.0))
    ref = gaussian_blur(f).values
    best, best_key = np.inf, None
    for o in (2, 3, 4, 5, 6):
        for l in range(min_window(o), 52, 2):
            w = sg_coefficients(SGConfig(o, l))
            h = (l - 1) // 2
            sm = np.array([[w @ vals[i - h:i + h + 1, j] for j in range(12)] for i in range(h, 120 - h)])
            mse = np.mean((sm - ref[h:120 - h]) ** 2)
            if mse < best * (1 - 1e-9) or (abs(mse - best) <= 1e-9 * best and (l, o) < (best_key[1], best_key[0])):
                best, best_key = mse, (o, l)
    assert auto_tune_sg(f, "x") == best_key


def test_noiseless_cubic_ties_orders_two_and_three():
    # smoothing weights of degree 2m and 2m+1 coincide, so (2, l) and (3, l)
    # score identically and the tie-break returns order 2
    x = np.linspace(-1, 1, 60)
    f = Field(np.tile((x**3 - x)[:, None], (1, 8)), (x[1] - x[0], 1.0))
    scores = tuning_scores(f, "x")
    for l in range(5, 52, 2):
        assert math.isclose(scores[(2, l)], scores[(3, l)], rel_tol=1e-9, abs_tol=1e-30)
    o, l = auto_tune_sg(f, "x")
    assert o == 2 and math.isclose(scores[(o, l)], min(scores.values()), rel_tol=1e-9)


@pytest.mark.xfail(strict=True, reason="tie-break picks order 2; see decisions ledger")
def test_noiseless_cubic_returns_order_three():
    x = np.linspace(-1, 1, 60)
    f = Field(np.tile((x**3 - x)[:, None], (1, 8)), (x[1] - x[0], 1.0))
    assert auto_tune_sg(f, "x")[0] == 3


@given(st.integers(5, 80), st.integers(0, 1000))
def test_tuned_config_is_valid(n, seed):
    f = Field(np.random.default_rng(seed).standard_normal((n, 6)), (1.0, 1.0))
    o, l = auto_tune_sg(f, "x")
    SGConfig(o, l).validate(n)


def test_complex_tuned_on_magnitude(rng):
    vals = np.exp(1j * np.linspace(0, 3, 40))[:, None] * (1 + 0.1 * rng.standard_normal((40, 7)))
    f = Field(vals, (0.1, 0.1))
    assert auto_tune_sg(f, "x") == auto_tune_sg(f.with_values(np.abs(vals)), "x")


# derivative configs and compute_derivatives ---------------------------------


def test_derivative_config_order_margin():
    scores = {(o, l): 1.0 for o, l in candidate_grid(100)}
    cfg = derivative_config(scores, (2, 13), 2, 100, "x", 0.1)
    assert (cfg.order, cfg.window, cfg.deriv) == (2 + ORDER_MARGIN, 13, 2)
    literal = derivative_config(scores, (2, 13), 2, 100, "x", 0.1, order_margin=0)
    assert (literal.order, literal.window) == (2, 13)
    wide = derivative_config(scores, (2, 3), 3, 100, "x", 0.1)
    assert wide.order == 5 and wide.window == min_window(5)


def test_derivative_config_retunes_when_order_exceeds_tuned():
    scores = {(o, l): float(l) + (0.5 if o == 4 else 0.0) for o, l in candidate_grid(100)}
    cfg = derivative_config(scores, (2, 3), 3, 100, "x", 1.0, order_margin=0)
    # re-tune restricted to o >= 3: best is (3, 5)
    assert (cfg.order, cfg.window) == (3, 5)


def test_constant_field_has_zero_derivatives():
    ds = compute_derivatives(Field(np.full((30, 20), 2.0), (0.1, 0.1)), max_x_order=3)
    assert np.allclose(ds.smoothed.values, 2.0)
    for d in ds.derivs.values():
        assert np.abs(d.values).max() < 1e-10


def test_burgers_derivatives_match_spectral_reference_of_blurred_data(burgers):
    # the filter differentiates the blurred field, so the exact reference is
    # the spectral derivative of that blurred field
    f, _ = burgers
    ds = compute_derivatives(f, max_x_order=2)
    mx, mt = ds.margins["x"], ds.margins["t"]

    def rms_err(k):
        ref = spectral_derivative(ds.smoothed.values, f.spacing[0], k)
        err = (ds.derivs[("x", k)].values - ref)[mx:-mx, mt:-mt]
        return np.sqrt(np.mean(err**2))

    assert rms_err(1) < 1e-3
    # the tuned 13-point window leaves a fit bias on u_xx (rms of u_xx is 0.28)
    assert rms_err(2) < 5e-3


def test_order_margin_reduces_derivative_bias(burgers):
    f, _ = burgers
    errs = {}
    for margin in (0, ORDER_MARGIN):
        ds = compute_derivatives(f, max_x_order=2, order_margin=margin)
        m = ds.margins["x"]
        ref = spectral_derivative(f.values, f.spacing[0], 2)
        errs[margin] = np.sqrt(np.mean((ds.get("x", 2).values - ref)[m:-m] ** 2))
    assert errs[ORDER_MARGIN] < errs[0] / 3


@pytest.mark.xfail(strict=True, reason="blur bias at dt = 0.1 exceeds 1e-3; see decisions ledger")
def test_burgers_derivatives_match_spectral_reference_of_raw_data(burgers):
    f, _ = burgers
    ds = compute_derivatives(f, max_x_order=2)
    mx, mt = ds.margins["x"], ds.margins["t"]
    for k in (1, 2):
        ref = spectral_derivative(f.values, f.spacing[0], k)
        err = (ds.derivs[("x", k)].values - ref)[mx:-mx, mt:-mt]
        assert np.sqrt(np.mean(err**2)) < 1e-3


def test_transport_time_derivative_ratio(transport):
    f, _ = transport
    ds = compute_derivatives(f, max_x_order=1)
    mx, mt = ds.margins["x"], ds.margins["t"]
    ut = ds.get("t", 1).values[mx:-mx, mt:-mt]
    ux = ds.get("x", 1).values[mx:-mx, mt:-mt]
    mask = np.abs(ux) > 0.1
    assert np.max(np.abs(ut[mask] / ux[mask] - 3.0)) < 0.03


def test_derivative_set_contents(transport):
    f, _ = transport
    ds = compute_derivatives(f, max_x_order=3)
    assert set(ds.derivs) == {("t", 1), ("x", 1), ("x", 2), ("x", 3)}
    assert ds.max_order == {"t": 1, "x": 3}
    assert all(d.shape == f.shape and d.spacing == f.spacing for d in ds.derivs.values())
    assert ds.get("x", 0) is ds.smoothed
    with pytest.raises(KeyError):
        ds.get("x", 4)
    for (axis, k), cfg in ds.configs.items():
        cfg.validate(f.shape[f.axis_index(axis)])
        assert cfg.order >= k + ORDER_MARGIN


def test_compute_derivatives_two_spatial_axes():
    x = np.linspace(0, 1, 40)
    y = np.linspace(0, 2, 90)
    t = np.linspace(0, 1, 60)
    X, Y, T = np.meshgrid(x, y, t, indexing="ij")
    vals = X**2 + Y * T
    ds = compute_derivatives(Field(vals, (x[1] - x[0], y[1] - y[0], t[1] - t[0])), max_x_order=2)
    assert ("y", 2) in ds.derivs and "y" in ds.tuned
    inner = tuple(slice(ds.margins[a], -ds.margins[a]) for a in ("x", "y", "t"))
    assert vals[inner].size > 0
    # the blur adds a constant to a quadratic; derivatives of order <= 2 are exact
    assert np.allclose(ds.get("y", 1).values[inner], T[inner], atol=1e-9)
    assert np.allclose(ds.get("x", 2).values[inner], 2.0, atol=1e-8)
