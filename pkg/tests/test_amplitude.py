import dataclasses
import json
import math

import numpy as np
import pytest

from interemit import (AtomParams, DegenerateAmplitudeError, GridBudgetError,
                       GridSpec, PoleOnGridError, amplitude_at,
                       dark_state_amplitude_at, decomposition_grid, derive,
                       default_grid_spec, load_grid, resonance_terms,
                       sample_grid, save_grid, separable_fixture_grid)


def test_exact_trapping_at_degenerate_dark_state():
    p = AtomParams(gamma_a=1.0, gamma_b=1.0, omega_12=0.0, epsilon=1.0,
                   coherence_r=0.0, coherence_theta=math.pi, eta=0.1)
    d = derive(p)
    # both resonance weights cancel; float residue only
    for dq, dk in [(0.02, -0.01), (0.0, 0.0), (-0.1, 0.3)]:
        assert abs(amplitude_at(d, p, dq, dk)) < 1e-13
    with pytest.raises(DegenerateAmplitudeError, match="identically zero"):
        sample_grid(p)


def test_point_value_matches_high_precision_reference():
    # frozen from a 50-digit evaluation of the two-pole formula
    p = AtomParams(gamma_a=1.0, gamma_b=1.0, omega_12=0.02, epsilon=1.0,
                   coherence_r=0.5, coherence_theta=1.0, eta=0.1)
    ref = 0.71956376424585217705 + 1.1206541648182491297j
    val = amplitude_at(derive(p), p, 0.05, -0.05)
    assert abs(val - ref) / abs(ref) < 1e-12


def test_dark_ridge_profile_is_lorentzian_about_its_center():
    # the dark resonance sits at dq + dk = -delta/2 with half width delta^2/4
    delta, eta = 0.02, 0.1
    p = AtomParams.from_dimensionless(delta, eta)
    d = derive(p)
    terms = resonance_terms(p, d)
    v0 = terms.ridge_center
    assert v0 == pytest.approx(-delta / 2, rel=1e-12)
    alpha = terms.ridge_half_width
    assert alpha == pytest.approx(delta ** 2 / 4, rel=1e-3)
    peak = abs(amplitude_at(d, p, 0.0, v0)) ** 2
    half = abs(amplitude_at(d, p, 0.0, v0 + alpha)) ** 2
    assert half / peak == pytest.approx(0.5, abs=1e-3)
    # at face value (profile measured from dk = 0) the ratio is nowhere near
    # one half because of the -delta/2 line shift
    literal = (abs(amplitude_at(d, p, 0.0, delta ** 2 / 4)) ** 2
               / abs(amplitude_at(d, p, 0.0, 0.0)) ** 2)
    assert 0.95 < literal < 1.0


def test_dark_state_form_point_values():
    delta = 0.02
    assert dark_state_amplitude_at(delta, 0.1, 0.0, 0.0) == pytest.approx(
        -4.0 / delta ** 2, rel=1e-14)
    ratio = (abs(dark_state_amplitude_at(delta, 0.1, 0.0, delta ** 2 / 4)) ** 2
             / abs(dark_state_amplitude_at(delta, 0.1, 0.0, 0.0)) ** 2)
    assert ratio == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ValueError):
        dark_state_amplitude_at(0.0, 0.1, 0.0, 0.0)


def test_full_amplitude_reduces_to_dark_state_form_on_ridge():
    delta, eta = 0.02, 0.1
    p = AtomParams.from_dimensionless(delta, eta)
    d = derive(p)
    terms = resonance_terms(p, d)
    v0, alpha = terms.ridge_center, terms.ridge_half_width
    u = np.linspace(-50 * alpha, 50 * alpha, 801)
    full = np.asarray(amplitude_at(d, p, 0.0, v0 + u))
    # single-pole form is centred on its own resonance at dq + dk = 0
    single = np.asarray(dark_state_amplitude_at(delta, eta, 0.0, u))
    const = np.vdot(single, full) / np.vdot(single, single)
    rel_dev = np.abs(full - const * single) / np.abs(full)
    assert rel_dev.max() < 2 * delta


def test_sample_grid_normalization_and_flags(dark_rotated_grid, dark_params):
    g = dark_rotated_grid
    assert g.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.isfinite(g.values.view(float)))
    assert g.params_fingerprint == dark_params.fingerprint()
    assert g.spec.scheme == "rotated"
    # spec default: 8 samples per ridge half width
    terms = resonance_terms(dark_params)
    dv = (g.spec.k_max - g.spec.k_min) / (g.spec.n_k - 1)
    assert dv <= terms.ridge_half_width / 4
    assert not any("resolution inadequate" in f for f in g.flags)


def test_uniform_scheme_grid_and_adequacy_warning():
    p = AtomParams.from_dimensionless(0.1, 0.1)
    spec = GridSpec(q_min=-0.4, q_max=0.4, k_min=-1.0, k_max=1.0,
                    n_q=101, n_k=101, scheme="uniform")
    g = sample_grid(p, spec)
    assert g.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert any("resolution inadequate" in f for f in g.flags)


def test_global_phase_invariance(dark_params):
    d = derive(dark_params)
    phased = dataclasses.replace(d, a10=d.a10 * np.exp(0.7j),
                                 a20=d.a20 * np.exp(0.7j),
                                 c1=d.c1 * np.exp(0.7j), c2=d.c2 * np.exp(0.7j))
    dq = np.linspace(-0.3, 0.3, 7)
    dk = np.linspace(-0.2, 0.1, 7)
    a = np.abs(np.asarray(amplitude_at(d, dark_params, dq, dk)))
    b = np.abs(np.asarray(amplitude_at(phased, dark_params, dq, dk)))
    assert np.max(np.abs(a - b) / a) < 1e-12


def test_amplitude_depends_on_ridge_coordinate_only():
    p = AtomParams.from_dimensionless(0.05, 0.1, coherence_r=0.3,
                                      coherence_theta=2.0)
    d = derive(p)

    def ridge_factor(dq, dk):
        return amplitude_at(d, p, dq, dk) / math.exp(-((dq / p.eta) ** 2))

    for v in [-0.07, 0.0, 0.11]:
        vals = [ridge_factor(dq, v - dq) for dq in (-0.2, -0.05, 0.0, 0.1, 0.3)]
        for x in vals[1:]:
            assert abs(x - vals[0]) / abs(vals[0]) < 1e-12


def test_pole_on_grid_detection():
    delta = 1e-7  # half width 2.5e-15 falls below the pole tolerance
    p = AtomParams.from_dimensionless(delta, 0.1)
    terms = resonance_terms(p)
    assert not terms.is_trapping
    v0 = terms.ridge_center
    spec = GridSpec(q_min=-0.1, q_max=0.1, k_min=v0 - 1e-6, k_max=v0 + 1e-6,
                    n_q=21, n_k=21, scheme="rotated")
    with pytest.raises(PoleOnGridError):
        sample_grid(p, spec)


def test_grid_budget_rejection():
    p = AtomParams.from_dimensionless(0.05, 0.1)
    spec = GridSpec(q_min=-0.4, q_max=0.4, k_min=-1.0, k_max=1.0,
                    n_q=2000, n_k=2000, scheme="uniform")
    with pytest.raises(GridBudgetError):
        sample_grid(p, spec, max_nodes=1_000_000)
    with pytest.raises(GridBudgetError):
        decomposition_grid(p, max_nodes=100_000)


def test_decomposition_grid_layout(dark_decomposition_grid, dark_params):
    g = dark_decomposition_grid
    assert g.spec.scheme == "uniform"
    assert g.total_mass() == pytest.approx(1.0, abs=1e-10)
    steps_q = np.diff(g.q_axis)
    assert np.allclose(steps_q, steps_q[0])
    # photon axis has a uniform core plus geometric wings
    steps_k = np.diff(g.k_axis)
    assert steps_k.max() > 2 * steps_k.min()
    assert g.q_axis[-1] == pytest.approx(4 * dark_params.eta, rel=1e-6)


def test_grid_export_roundtrip_and_determinism(tmp_path):
    p = AtomParams.from_dimensionless(0.1, 0.1)
    spec = GridSpec(q_min=-0.4, q_max=0.4, k_min=-0.6, k_max=0.5,
                    n_q=41, n_k=37, scheme="uniform")
    g = sample_grid(p, spec)
    f1 = save_grid(g, str(tmp_path / "a.npz"))
    f2 = save_grid(g, str(tmp_path / "b.npz"))
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    assert any(f.endswith(".csv") for f in f1)  # small grid gets a CSV twin
    header = json.loads((tmp_path / "a.csv").read_text().splitlines()[0][2:])
    for key in ("schema_version", "n_q", "n_k", "q_min", "q_max", "k_min",
                "k_max", "scheme", "params_fingerprint", "norm"):
        assert key in header
    back = load_grid(str(tmp_path / "a.npz"))
    assert back.spec == g.spec
    assert np.allclose(back.values, g.values)
    assert back.params == p


def test_separable_fixture_grid(separable_grid):
    g = separable_grid
    assert g.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert g.params_fingerprint == "fixture:separable"
