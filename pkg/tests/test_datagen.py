import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ralpde.datagen import (
    DEFAULTS,
    SYSTEMS,
    SystemSpec,
    default_library,
    generate,
    inject_noise,
    kdv_two_soliton,
    make_trial,
    noise_sigma,
    spectral_derivative,
    split_step_qho,
)
from ralpde.library import LibrarySpec


def test_transport_value_and_grid(transport):
    f, truth = transport
    x = f.coords("x")
    i = int(np.argmin(np.abs(x + 2.0)))
    assert x[i] == pytest.approx(-2.0)
    assert f.values[i, 0] == pytest.approx(math.exp(-4.0), rel=1e-12)
    assert f.shape == (601, 201)
    assert truth.to_dict() == {"u_x": 3.0}


def test_heat_initial_profile():
    f, truth = generate(SystemSpec.make("heat"))
    x = f.coords("x")
    assert np.allclose(f.values[:, 0], 6 * np.sin(np.pi * x / 5), rtol=0, atol=1e-12)
    assert truth.to_dict() == {"u_xx": 10.0}


def test_burgers_initial_condition(burgers):
    f, truth = burgers
    x = f.coords("x")
    assert np.allclose(f.values[:, 0], np.exp(-((x + 2) ** 2)), rtol=1e-12, atol=1e-15)
    assert f.shape == (256, 101)
    assert truth.names == {"u*u_x", "u_xx"}


def test_burgers_mass_conserved(burgers):
    f, _ = burgers
    mass = f.values.sum(axis=0)
    assert np.max(np.abs(mass - mass[0])) / mass[0] < 1e-6


def _logf(x, t, a1, a2, B1, B2):
    A = ((a1 - a2) / (a1 + a2)) ** 2
    th1, th2 = a1 * x - a1**3 * t, a2 * x - a2**3 * t
    terms = np.stack([np.zeros_like(x), np.log(B1) + th1, np.log(B2) + th2, np.log(A * B1 * B2) + th1 + th2])
    return np.logaddexp.reduce(terms, axis=0)


def test_kdv_matches_refined_log_second_difference():
    p = DEFAULTS["kdv2soliton"]
    f, _ = generate(SystemSpec.make("kdv"))
    x, t = f.coords("x"), f.coords("t")
    h = (x[1] - x[0]) / 10
    worst = 0.0
    for j in range(0, len(t), 20):
        def d2(step):
            lf = [_logf(x + s * step, t[j], p["a1"], p["a2"], p["B1"], p["B2"]) for s in (-1, 0, 1)]
            return (lf[0] - 2 * lf[1] + lf[2]) / step**2
        # Richardson step removes the h^2 term of the central difference
        oracle = 2 * (4 * d2(h / 2) - d2(h)) / 3
        worst = max(worst, float(np.max(np.abs(f.values[:, j] - oracle))))
    assert worst < 1e-6


def test_kdv_satisfies_its_pde_interior():
    p = DEFAULTS["kdv2soliton"]
    args = (p["a1"], p["a2"], p["B1"], p["B2"])
    x = np.linspace(-20, 20, 401)
    t = np.linspace(1, 19, 19)

    def u(xx, tt):
        return kdv_two_soliton(np.atleast_1d(xx), np.atleast_1d(tt), *args)

    ht, hx = 1e-4, 5e-3
    ut = (u(x, t + ht) - u(x, t - ht)) / (2 * ht)
    ux = (u(x + hx, t) - u(x - hx, t)) / (2 * hx)
    uxxx = (u(x + 2 * hx, t) - 2 * u(x + hx, t) + 2 * u(x - hx, t) - u(x - 2 * hx, t)) / (2 * hx**3)
    resid = ut - (-6 * u(x, t) * ux - uxxx)
    assert math.sqrt(np.mean(resid**2)) < 1e-4


def test_qho_norm_conserved():
    f, truth = generate(SystemSpec.make("qho"))
    norms = np.sum(np.abs(f.values) ** 2, axis=0)
    assert np.max(np.abs(norms / norms[0] - 1)) < 1e-8
    assert f.is_complex and truth.names == {"u_xx.im", "x^2*u.im"}


def test_qho_ground_state_only_rotates_phase():
    x = -7.5 + (15 / 512) * np.arange(512)
    t = np.linspace(0, 2, 21)
    psi0 = np.exp(-(x**2) / 2)
    want = psi0[:, None] * np.exp(-0.5j * t)[None, :]
    err10 = np.max(np.abs(split_step_qho(x, t, psi0, substeps=10) - want))
    err20 = np.max(np.abs(split_step_qho(x, t, psi0, substeps=20) - want))
    assert err10 < 1e-5
    # Strang splitting is second order in the internal step
    assert 3.5 < err10 / err20 < 4.5


def _naive_derivative(u, dx, order):
    n = len(u)
    j = np.arange(n)
    F = np.array([np.sum(u * np.exp(-2j * np.pi * j * k / n)) for k in range(n)])
    kk = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    return np.real(np.array([np.sum((1j * kk) ** order * F * np.exp(2j * np.pi * k * np.arange(n) / n)) for k in j])) / n


@pytest.mark.parametrize("n,order", [(64, 1), (64, 2), (63, 1), (48, 3)])
def test_spectral_derivative_matches_naive_dft(n, order):
    u = np.random.default_rng(n + order).standard_normal(n)
    dx = 0.3
    assert np.max(np.abs(spectral_derivative(u, dx, order) - _naive_derivative(u, dx, order))) < 1e-9


def test_spectral_derivative_of_periodic_sine():
    x = np.linspace(0, 2 * np.pi, 128, endpoint=False)
    d = spectral_derivative(np.sin(3 * x), x[1] - x[0], 2)
    assert np.max(np.abs(d + 9 * np.sin(3 * x))) < 1e-10


def test_advdiff_matches_gaussian_green_function():
    f, truth = generate(SystemSpec.make("advdiff"))
    x, t = f.coords("x"), f.coords("t")
    for j in (0, 50, 100):
        s = 1 + 4 * t[j]
        want = np.exp(-((x + 2 - t[j]) ** 2) / s) / math.sqrt(s)
        assert np.max(np.abs(f.values[:, j] - want)) < 1e-5
    assert truth.to_dict() == {"u_x": -1.0, "u_xx": 1.0}


def test_cable_matches_decaying_gaussian():
    f, truth = generate(SystemSpec.make("cable"))
    x, t = f.coords("x"), f.coords("t")
    for j in (0, 5, 10):
        s = 1 + 4 * t[j]
        want = math.exp(-t[j]) * np.exp(-(x**2) / s) / math.sqrt(s)
        assert np.max(np.abs(f.values[:, j] - want)) < 1e-4
    assert truth.to_dict() == {"u": -1.0, "u_xx": 1.0}


def test_heat_and_transport_satisfy_pde():
    f, _ = generate(SystemSpec.make("heat"))
    x, t = f.coords("x"), f.coords("t")
    X, T = np.meshgrid(x, t, indexing="ij")
    q = math.pi / 5
    ut = -10 * q**2 * f.values
    uxx = -6 * q**2 * np.sin(q * X) * np.exp(-10 * q**2 * T)
    assert math.sqrt(np.mean((ut - 10 * uxx) ** 2)) < 1e-6
    g, _ = generate(SystemSpec.make("transport"))
    X, T = np.meshgrid(g.coords("x"), g.coords("t"), indexing="ij")
    ut = -6 * (X + 3 * T) * g.values
    ux = -2 * (X + 3 * T) * g.values
    assert math.sqrt(np.mean((ut - 3 * ux) ** 2)) < 1e-6


def test_parameters_and_aliases():
    assert SystemSpec.make("kdv").system == "kdv2soliton"
    f, truth = generate(SystemSpec.make("burgers", nu=0.2, nt=20))
    assert f.shape == (256, 20) and truth.to_dict()["u_xx"] == 0.2
    mass = f.values.sum(axis=0)
    assert np.allclose(mass, mass[0], rtol=1e-6)
    for bad in (dict(nu=-1.0), dict(nu=float("nan"))):
        with pytest.raises(ValueError):
            generate(SystemSpec.make("burgers", **bad))
    with pytest.raises(ValueError):
        SystemSpec.make("navier")
    with pytest.raises(ValueError):
        SystemSpec.make("heat", nu=1.0).resolved()


def test_whitenoise_statistics_and_seeding():
    spec = SystemSpec.make("whitenoise", seed=3, sigma=10.0, nx=500, nt=250)
    f, truth = generate(spec)
    assert f.shape == (500, 250) and f.spacing == (1.0, 1.0)
    assert abs(f.values.mean()) < 0.1 and f.values.std() == pytest.approx(10, rel=0.01)
    assert np.array_equal(generate(spec)[0].values, f.values)
    assert not np.array_equal(generate(SystemSpec.make("whitenoise", seed=4, sigma=10.0, nx=500, nt=250))[0].values, f.values)
    assert truth.names == frozenset()
    assert DEFAULTS["whitenoise"]["nx"] == 2000 and DEFAULTS["whitenoise"]["nt"] == 1000


def test_noise_limits(burgers):
    f, _ = burgers
    assert inject_noise(f, math.inf, 0) is f
    assert noise_sigma(f.values, 0.0) == pytest.approx(np.std(f.values))
    with pytest.raises(ValueError):
        inject_noise(f, math.nan, 0)


def test_noise_hits_requested_snr(burgers):
    f, _ = burgers
    noisy = inject_noise(f, 40.0, seed=9)
    measured = 20 * math.log10(np.std(f.values) / np.std(noisy.values - f.values))
    assert 39.5 <= measured <= 40.5


def test_complex_noise_uses_stacked_components():
    f, _ = generate(SystemSpec.make("qho", t1=0.5))
    noisy = inject_noise(f, 20.0, seed=1)
    z = noisy.values - f.values
    stacked = np.concatenate([f.values.real.ravel(), f.values.imag.ravel()])
    assert np.std(np.r_[z.real.ravel(), z.imag.ravel()]) == pytest.approx(np.std(stacked) / 10, rel=0.02)


@settings(max_examples=5, deadline=None)
@given(st.sampled_from([s for s in SYSTEMS if s not in ("whitenoise", "qho")]))
def test_generated_fields_are_finite(system):
    f, truth = generate(SystemSpec.make(system))
    assert np.all(np.isfinite(f.values)) and truth.names


def test_default_libraries():
    assert default_library("burgers") == LibrarySpec()
    assert "x^2*u" in {t.name for t in __import__("ralpde.library", fromlist=["x"]).enumerate_terms(default_library("qho"))}


def test_make_trial_determinism_and_seeding():
    spec = SystemSpec.make("burgers")
    lib = LibrarySpec()
    a, _ = make_trial(spec, lib, 0, base_seed=0, snr_db=40.0)
    b, _ = make_trial(spec, lib, 0, base_seed=0, snr_db=40.0)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    # trial i draws its noise from seed base_seed + i
    f, _ = generate(spec)
    z0 = inject_noise(f, 40.0, 0).values - f.values
    z1 = inject_noise(f, 40.0, 1).values - f.values
    assert z0.shape == z1.shape and not np.array_equal(z0, z1)
    shifted, _ = make_trial(spec, lib, 0, base_seed=1, snr_db=40.0)
    again, _ = make_trial(spec, lib, 1, base_seed=0, snr_db=40.0)
    assert shifted.y.tobytes() == again.y.tobytes()


def test_make_trial_sample_size():
    spec = SystemSpec.make("transport")
    lib = LibrarySpec()
    full, _ = make_trial(spec, lib, 0, snr_db=math.inf)
    sub, _ = make_trial(spec, lib, 0, n_samples=full.n_rows)
    order = np.lexsort(sub.row_index.T[::-1])
    assert np.array_equal(sub.X[order], full.X[np.lexsort(full.row_index.T[::-1])])
    small, _ = make_trial(spec, lib, 2, n_samples=1000)
    assert small.n_rows == 1000
    with pytest.raises(ValueError):
        make_trial(spec, lib, 0)
