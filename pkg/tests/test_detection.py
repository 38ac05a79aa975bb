import math

import numpy as np
import pytest

import interemit.detection as detection
from interemit import (AtomParams, EmptySliceError, GridSpec,
                       conditional_variance, dark_state_variance_ratio_estimate,
                       fwhm, lorentzian_fit, photon_marginal, sample_grid,
                       scan_coherence, unconditional_variance, variance_ratio,
                       variance_ratio_fast)
from interemit.detection import default_r_axis, default_theta_axis


# ------------------------------------------------------------- variances


def test_unconditional_variance_of_gaussian_fixture(separable_grid):
    # density ~ exp(-2 q^2/eta^2) has variance eta^2/4
    eta = 0.1
    assert unconditional_variance(separable_grid) == pytest.approx(
        eta ** 2 / 4, rel=1e-8)


def test_unconditional_variance_dark_state(dark_rotated_grid, dark_params):
    # Gaussian envelope dominates the atomic marginal
    var = unconditional_variance(dark_rotated_grid)
    assert var == pytest.approx(dark_params.eta ** 2 / 4, rel=1e-6)


def test_conditional_equals_unconditional_for_product_kernel(separable_grid):
    var_u = unconditional_variance(separable_grid)
    for dk0 in (0.0, 0.4, -0.9):
        assert conditional_variance(separable_grid, dk0) == pytest.approx(
            var_u, rel=1e-9)


def test_conditional_variance_dark_state_against_dense_oracle(dark_params):
    # independent dense-grid quadrature of the slice density at dk0 = 0
    grid = sample_grid(dark_params)
    got = conditional_variance(grid, 0.0)
    from interemit import resonance_terms
    terms = resonance_terms(dark_params)
    eta = dark_params.eta
    alpha = terms.ridge_half_width
    qs = terms.ridge_center
    q = np.unique(np.concatenate([
        np.linspace(-4 * eta, 4 * eta, 40001),
        qs + np.linspace(-40, 40, 30001) * alpha,
    ]))
    dens = np.exp(-2 * (q / eta) ** 2) * terms.abs2(q)
    w = np.gradient(q)
    m0, m1, m2 = (dens * w).sum(), (q * dens * w).sum(), (q * q * dens * w).sum()
    oracle = m2 / m0 - (m1 / m0) ** 2
    assert got == pytest.approx(oracle, rel=1e-4)
    # the narrow-ridge asymptote underestimates by the envelope shift factor
    asym = eta * 0.05 ** 2 / (4 * math.sqrt(2 * math.pi))
    assert got / asym == pytest.approx(1.12, abs=0.05)


def test_empty_slice_raises(separable_grid):
    with pytest.raises(EmptySliceError):
        conditional_variance(separable_grid, 1.9)


def test_variance_ratio_product_state(separable_grid):
    rep = variance_ratio(separable_grid)
    assert rep.r_ratio == pytest.approx(1.0, abs=1e-9)
    assert rep.dk0 == pytest.approx(0.0, abs=1e-9)


def test_variance_ratio_dark_state_matches_estimate(dark_rotated_grid, dark_params):
    rep = variance_ratio(dark_rotated_grid)
    est = dark_state_variance_ratio_estimate(0.1, 0.05)
    assert est == pytest.approx(100.27, abs=0.01)
    assert abs(rep.r_ratio / est - 1) < 0.10
    assert rep.dk0 == pytest.approx(-0.025, abs=1e-6)
    fast = variance_ratio_fast(dark_params)
    assert fast.r_ratio == pytest.approx(rep.r_ratio, rel=1e-6)


def test_variance_ratio_uniform_grid_agrees_with_quadrature_path():
    p = AtomParams.from_dimensionless(0.1, 0.1)
    # alpha/4 sampling on both axes
    spec = GridSpec(q_min=-0.4, q_max=0.4, k_min=-1.1, k_max=1.0,
                    n_q=1281, n_k=3361, scheme="uniform")
    rep = variance_ratio(sample_grid(p, spec))
    fast = variance_ratio_fast(p)
    assert rep.r_ratio == pytest.approx(fast.r_ratio, rel=0.01)


def test_uniform_grid_doubling_changes_ratio_below_half_percent():
    p = AtomParams.from_dimensionless(0.1, 0.1)
    base = GridSpec(q_min=-0.4, q_max=0.4, k_min=-1.1, k_max=1.0,
                    n_q=641, n_k=1681, scheme="uniform")
    doubled = GridSpec(q_min=-0.4, q_max=0.4, k_min=-1.1, k_max=1.0,
                       n_q=1281, n_k=3361, scheme="uniform")
    r0 = variance_ratio(sample_grid(p, base)).r_ratio
    r1 = variance_ratio(sample_grid(p, doubled)).r_ratio
    assert abs(r1 / r0 - 1) < 0.005


def test_explicit_dk0_policy(dark_rotated_grid):
    rep = variance_ratio(dark_rotated_grid, dk0_policy=-0.025)
    assert rep.dk0 == -0.025
    assert rep.r_ratio > 50


def test_photon_marginal_peaks_at_ridge_center(dark_rotated_grid):
    kn, P = photon_marginal(dark_rotated_grid)
    assert kn[int(np.argmax(P))] == pytest.approx(-0.025, abs=1e-3)


def test_wide_coherence_range_keeps_strong_ratio():
    # with eta = delta = 0.01 the ratio stays above 100 even at the
    # population-imbalance edge exp(2r) = 55
    edge = AtomParams.from_dimensionless(0.01, 0.01, coherence_r=math.log(55) / 2)
    r_edge = variance_ratio_fast(edge).r_ratio
    assert r_edge > 100.0
    assert r_edge == pytest.approx(158.9, rel=0.05)
    r_max = variance_ratio_fast(AtomParams.from_dimensionless(0.01, 0.01)).r_ratio
    assert r_max == pytest.approx(dark_state_variance_ratio_estimate(0.01, 0.01),
                                  rel=0.05)


def test_ratio_symmetric_under_population_swap():
    for rv in (0.2, 0.7, 1.5):
        a = variance_ratio_fast(AtomParams.from_dimensionless(0.02, 0.1, coherence_r=rv)).r_ratio
        b = variance_ratio_fast(AtomParams.from_dimensionless(0.02, 0.1, coherence_r=-rv)).r_ratio
        assert abs(a / b - 1) < 1e-6


def test_separable_limit_small_eta():
    # Gaussian collapse: kernel factorizes, ratio drops to 1 monotonically
    delta = 0.1
    ratios = [variance_ratio_fast(AtomParams.from_dimensionless(delta, eta)).r_ratio
              for eta in (delta ** 2 / 10, delta ** 2 / 20, delta ** 2 / 40)]
    assert ratios[0] < 1.1
    assert ratios[0] > ratios[1] > ratios[2] > 1.0 - 1e-6


# ------------------------------------------------------------- profiles


def test_fwhm_of_lorentzian():
    x = np.linspace(-10, 10, 4001)
    w = 0.7
    y = 2.3 / (x ** 2 + w ** 2)
    assert fwhm(x, y) == pytest.approx(2 * w, rel=0.01)


def test_fwhm_of_gaussian():
    x = np.linspace(-5, 5, 4001)
    sigma = 0.8
    y = np.exp(-x ** 2 / (2 * sigma ** 2))
    assert fwhm(x, y) == pytest.approx(2 * sigma * math.sqrt(2 * math.log(2)),
                                       rel=0.01)


def test_fwhm_monotone_profile_is_unbounded():
    x = np.linspace(0, 1, 50)
    assert math.isnan(fwhm(x, x))
    assert math.isnan(fwhm(x, np.exp(x)))


def test_lorentzian_fit_recovers_parameters():
    x = np.linspace(-3, 3, 301)
    y = 5.0 / (1 + ((x - 0.2) / 0.5) ** 2)
    fit = lorentzian_fit(x, y)
    assert fit["amplitude"] == pytest.approx(5.0, rel=1e-6)
    assert fit["center"] == pytest.approx(0.2, abs=1e-8)
    assert fit["half_width"] == pytest.approx(0.5, rel=1e-6)
    assert fit["rms_residual_rel"] < 1e-9


# ------------------------------------------------------------- scans


def test_scan_peak_sits_at_dark_coherence():
    p = AtomParams.from_dimensionless(0.05, 0.1)
    scan = scan_coherence(p, default_r_axis(p, 11), default_theta_axis(11),
                          metric="R")
    assert scan.peak[0] == pytest.approx(0.0, abs=1e-12)
    assert scan.peak[1] == pytest.approx(math.pi, rel=1e-12)
    assert scan.n_missing == 0
    assert np.nanmin(scan.values) >= 1.0 - scan.tol


def test_scan_widths_and_lorentzian_quality():
    # both cut widths fall near twice the 2*delta/eta half-width law
    p = AtomParams.from_dimensionless(0.02, 0.1)
    scan = scan_coherence(p, default_r_axis(p, 101),
                          np.linspace(math.pi - 1.2, math.pi + 1.2, 101),
                          metric="R")
    assert scan.fwhm_r == pytest.approx(0.813, abs=0.02)
    assert scan.fwhm_theta == pytest.approx(0.792, abs=0.02)
    assert scan.fit_r is not None and scan.fit_r["rms_residual_rel"] < 0.10
    assert scan.fit_r["half_width"] == pytest.approx(2 * 0.02 / 0.1, rel=0.1)


def test_scan_narrow_window_flags_unbounded_width():
    p = AtomParams.from_dimensionless(0.05, 0.1)
    scan = scan_coherence(p, np.linspace(-0.05, 0.05, 7),
                          np.linspace(math.pi - 0.05, math.pi + 0.05, 7),
                          metric="R")
    assert scan.fwhm_r is None and scan.fwhm_theta is None
    assert any("unbounded" in f for f in scan.flags)


def test_scan_records_failures_as_missing_values(monkeypatch):
    p = AtomParams.from_dimensionless(0.05, 0.1)
    real = detection.variance_ratio_fast

    def flaky(params, *a, **kw):
        if abs(params.coherence_r - 0.5) < 1e-12:
            raise RuntimeError("synthetic node failure")
        return real(params, *a, **kw)

    monkeypatch.setattr(detection, "variance_ratio_fast", flaky)
    scan = scan_coherence(p, np.array([-0.5, 0.0, 0.5]),
                          np.array([math.pi]), metric="R")
    assert scan.n_missing == 1
    assert math.isnan(scan.values[2, 0])
    assert np.isfinite(scan.values[0, 0])
    assert any("synthetic node failure" in f for f in scan.flags)


def test_scan_rejects_bad_axes():
    p = AtomParams.from_dimensionless(0.05, 0.1)
    with pytest.raises(ValueError):
        scan_coherence(p, np.array([]), np.array([1.0]))
    with pytest.raises(ValueError):
        scan_coherence(p, np.array([0.2, 0.1]), np.array([1.0]))


def test_scan_thread_pool_matches_serial():
    p = AtomParams.from_dimensionless(0.05, 0.1)
    r_axis = np.linspace(-1.0, 1.0, 5)
    t_axis = np.linspace(math.pi - 0.5, math.pi + 0.5, 3)
    serial = scan_coherence(p, r_axis, t_axis, metric="R")
    pooled = scan_coherence(p, r_axis, t_axis, metric="R", workers=2)
    assert np.allclose(serial.values, pooled.values, rtol=0, atol=0)
