import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fbm_bipolar import kernels
from fbm_bipolar.fbm import DomainError, wiener_variance_covariance
from fbm_bipolar.stoch_conv import (
    NoiseRealization,
    birkhoff_average,
    conv_variance,
    conv_variance_discrete,
    conv_variance_stationary,
    convolution_field,
    convolve_increments,
    filter_coefficients,
    fou_ensemble,
    i1_i2_diagnostics,
    i1_term,
    i2_term,
    lemma2_inner,
    lemma2_inner_by_parts,
    lemma2_scan,
    log_slope,
    ttv_divergence_witness,
    variance_partial_sums,
    y_identity_check,
)


# --- per-mode variance oracles -------------------------------------------------

@pytest.mark.parametrize("lam,t", [(4.0, 1.0), (25.0, 0.5), (0.5, 2.0)])
def test_brownian_variance_closed_form(lam, t):
    assert conv_variance(lam, t, 0.5) == pytest.approx(-math.expm1(-2 * lam * t) / (2 * lam), rel=1e-10)


@pytest.mark.parametrize("h", [0.3, 0.4])
def test_variance_matches_covariance_double_integral(h):
    lam, t = 4.0, 1.0
    phi = lambda s: math.exp(-lam * (t - s))
    oracle = wiener_variance_covariance(phi, lambda s: lam * phi(s), t, h)
    assert conv_variance(lam, t, h) == pytest.approx(oracle, rel=1e-7)


def test_stationary_limit():
    h, lam = 0.35, 9.0
    assert conv_variance_stationary(lam, h) == pytest.approx(math.gamma(2 * h + 1) / (2 * lam ** (2 * h)))
    assert conv_variance(lam, 10.0, h) == pytest.approx(conv_variance_stationary(lam, h), rel=1e-8)


def test_discrete_variance_brownian_closed_form():
    # z <- E z + phi1 dB: Var = phi1^2 dt (1 - E^{2n}) / (1 - E^2)
    lam, dt, n = 16.0, 2 ** -6, 40
    E, w = filter_coefficients(lam, dt)
    expect = w * w * dt * (1 - E ** (2 * n)) / (1 - E * E)
    assert conv_variance_discrete(lam, n, dt, 0.5) == pytest.approx(expect, rel=1e-12)


def test_discrete_variance_approaches_continuum():
    h, lam = 0.35, 4.0
    cont = conv_variance_stationary(lam, h)
    errs = [abs(conv_variance_discrete(lam, None, dt, h) - cont) for dt in (2 ** -6, 2 ** -8, 2 ** -10)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / cont < 5e-3


# --- recursion ------------------------------------------------------------------

def test_recursion_exact_for_linear_path():
    # beta(s) = c s gives z(t) = c (1 - e^{-lam t}) / lam
    lam, dt, n, c = 7.0, 0.01, 100, 0.8
    z = convolve_increments(np.full((1, n), c * dt), np.array([lam]), dt)
    assert z[0, -1] == pytest.approx(c * -math.expm1(-lam * n * dt) / lam, rel=1e-13)


def test_backends_agree_on_filter():
    rng = np.random.default_rng(0)
    inc = rng.standard_normal((5, 300))
    d, w, z0 = rng.uniform(0.1, 0.99, 5), rng.uniform(0.5, 1, 5), rng.standard_normal(5)
    a = kernels.exp_filter_numpy(inc, d, w, z0)
    b = kernels.exp_filter_numba(inc, d, w, z0)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-13)


# --- weighted singular integral and divergence witness ---------------------

@pytest.mark.parametrize("h", [0.26, 0.3, 0.4, 0.49])
def test_inner_integral_two_ways(h):
    assert lemma2_inner(h, 1.0)[0] == pytest.approx(lemma2_inner_by_parts(h), rel=1e-11)


def test_inner_integral_against_weighted_quad():
    h, x = 0.35, 3.0
    a = h - 0.5
    f = lambda y: math.expm1(y) / y if y > 0 else 1.0
    ref = integrate.quad(f, 0, x, weight="alg", wvar=(a, 0.0), epsrel=1e-12)[0]
    assert lemma2_inner(h, x)[0] == pytest.approx(ref, rel=1e-10)


def test_singular_integral_scan_increasing_with_algebraic_tail():
    h = 0.3
    v = lemma2_scan(h, [25.0, 50.0, 100.0, 200.0])
    assert np.all(np.diff(v) > 0)
    # integrand ~ x^{2H-3}, so the increment over [L, 2L] scales by 2^{2H-2} per doubling
    steps = np.diff(v)
    assert steps[2] / steps[1] == pytest.approx(2 ** (2 * h - 2), rel=0.05)


@pytest.mark.parametrize("a", [0.8, -0.2])
def test_witness_slope_approaches_two(a):
    lams = [30.0, 40.0, 50.0]
    # log value ~ 2 L + (2a - 2) log L, so the fitted slope is about 2 + (2a - 2) / 40
    assert log_slope(lams, ttv_divergence_witness(a, lams)) == pytest.approx(2 + (2 * a - 2) / 40, abs=0.01)


def test_witness_domain():
    with pytest.raises(DomainError):
        ttv_divergence_witness(1.0, [10.0])


# --- I1 / I2 ---------------------------------------------------------------------

def test_i_terms_brownian_case():
    lam, t = 9.0, 1.0
    assert i1_term(lam, t, 0.5) == pytest.approx(-math.expm1(-2 * lam * t) / lam, rel=1e-9)
    assert i2_term(lam, t, 0.5) == 0.0


def test_i1_large_lambda_asymptote():
    h, lam = 0.3, 20_000.0
    c = math.sqrt(2 * h * math.gamma(1.5 - h) / ((1 - 2 * h) * math.gamma(1 - 2 * h) * math.gamma(h + 0.5)))
    asym = 2 * c * c * math.gamma(2 * h) * (2 * lam) ** (-2 * h)
    assert i1_term(lam, 1.0, h) == pytest.approx(asym, rel=1e-3)


def test_diagnostics_bound_and_fit():
    rep = i1_i2_diagnostics(0.3, 1.0, 4)
    assert rep.bound_holds
    assert rep.constant_fit == pytest.approx((rep.i1[0, 0] + rep.i2[0, 0]) * 4 ** 0.6)
    assert np.all(np.diff(rep.i1_partial + rep.i2_partial) > 0)
    with pytest.raises(DomainError):
        i1_i2_diagnostics(0.2, 1.0, 2)


def test_partial_sums_nondecreasing():
    sums = variance_partial_sums(0.3, 1.0, [2, 4, 8])
    assert np.all(np.diff(sums) > 0)


# --- noise realisation and Y identity --------------------------------------------

def test_sub_lattice_reproducible():
    small = NoiseRealization.sample(2, 0.35, 0.5, master_seed=3, points_per_unit=64)
    big = NoiseRealization.sample(4, 0.35, 0.5, master_seed=3, points_per_unit=64)
    assert np.array_equal(small.values, big.values[:2, :2])


def test_shift_and_zeroing():
    noise = NoiseRealization.sample(2, 0.35, 1.0, master_seed=1, points_per_unit=64, t_start=-1.0)
    assert np.all(noise.beta(0.0) == 0.0)
    moved = noise.shift(0.5)
    assert np.allclose(moved.beta(0.25), noise.beta(0.75) - noise.beta(0.5))
    with pytest.raises(DomainError):
        noise.beta(0.01)


def test_convolution_needs_quarter():
    noise = NoiseRealization.sample(2, 0.2, 0.5, master_seed=0, points_per_unit=64)
    with pytest.raises(DomainError, match="4H > 1"):
        convolution_field(noise, 0.5)


def test_y_identity_zero_eigenvalue_exact():
    noise = NoiseRealization.sample(2, 0.35, 1.0, master_seed=2, points_per_unit=256)
    assert y_identity_check(noise, 1.0, lambdas=0.0).max_residual == 0.0


def test_y_identity_refinement():
    noise = NoiseRealization.sample(3, 0.35, 1.0, master_seed=2, points_per_unit=1024)
    r1 = y_identity_check(noise, 1.0, 1).max_residual
    r2 = y_identity_check(noise, 1.0, 2).max_residual
    assert r2 <= 0.5 * r1 < 1e-5


# --- stationary O-U ---------------------------------------------------------------

def test_fou_ensemble_variance_and_chunking():
    lam, h, dt = 4.0, 0.35, 2 ** -8
    x = fou_ensemble(lam, h, dt, 4000, master_seed=11, t_burn=5.0, times=(0.0, 1.0))
    oracle = conv_variance_discrete(lam, None, dt, h)
    se = oracle * math.sqrt(2.0 / x.shape[0])
    assert abs(x[:, 0].var() - oracle) < 4 * se
    assert abs(x[:, 1].var() - oracle) < 4 * se
    y = fou_ensemble(lam, h, dt, 4000, master_seed=11, t_burn=5.0, times=(0.0, 1.0), chunk=333)
    assert np.array_equal(x, y)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.integers(2, 50))
def test_birkhoff_constant(c, n):
    t = np.linspace(0, 1, n + 1)
    assert birkhoff_average(np.full(n + 1, c), t, 1.0) == pytest.approx(c, abs=1e-12)


def test_birkhoff_linear_and_errors():
    t = np.linspace(0, 4, 401)
    assert birkhoff_average(t, t, 2.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        birkhoff_average(t, t, 5.0)
