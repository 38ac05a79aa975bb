import math

import numpy as np
import pytest

from interemit import (AtomParams, PhysicalScales, derive,
                       effective_coordinates, physical_coordinates)


def test_degenerate_symmetric_roots():
    p = AtomParams(gamma_a=1.0, gamma_b=1.0, omega_12=0.0, epsilon=1.0,
                   coherence_r=0.0, coherence_theta=0.0, eta=0.1)
    d = derive(p)
    assert d.lam == 0
    assert d.s1 == pytest.approx(0.5, abs=1e-15)
    assert d.s2 == pytest.approx(-0.5, abs=1e-15)


def test_split_levels_match_high_precision_reference():
    # frozen from a 50-digit evaluation of the defining radical
    p = AtomParams(gamma_a=1.0, gamma_b=1.0, omega_12=0.02, epsilon=1.0,
                   coherence_r=0.0, coherence_theta=0.0, eta=0.1)
    d = derive(p)
    assert d.lam == pytest.approx(0.02j, rel=1e-15)
    ref_s1 = 0.49989998999799949986 + 0.01j
    ref_s2 = -0.49989998999799949986 + 0.01j
    assert abs(d.s1 - ref_s1) / abs(ref_s1) < 1e-12
    assert abs(d.s2 - ref_s2) / abs(ref_s2) < 1e-12


def test_partial_amplitudes_sum_is_a10():
    for r, th in [(0.0, math.pi), (0.5, 1.0), (-1.2, 4.5), (2.0, 0.3)]:
        p = AtomParams(gamma_a=1.0, gamma_b=0.7, omega_12=0.3, epsilon=0.8,
                       coherence_r=r, coherence_theta=th, eta=0.2)
        d = derive(p)
        assert abs((d.c1 + d.c2) - d.a10) < 1e-14


def test_root_identities_random_draws(rng):
    worst_sum = worst_prod = worst_c = 0.0
    for _ in range(10_000):
        ga = float(rng.uniform(0.1, 10.0))
        gb = float(rng.uniform(0.1, 10.0))
        p = AtomParams(gamma_a=ga, gamma_b=gb,
                       omega_12=float(rng.uniform(0.0, 5.0)),
                       epsilon=float(rng.uniform(0.0, 1.0)),
                       coherence_r=float(rng.uniform(-3.0, 3.0)),
                       coherence_theta=float(rng.uniform(0.0, 2 * math.pi)),
                       eta=float(rng.uniform(0.01, 1.0)))
        d = derive(p)
        scale = max(abs(d.s1), abs(d.s2), 1e-300)
        worst_sum = max(worst_sum, abs(d.s1 + d.s2 - d.lam) / scale)
        target = -p.epsilon ** 2 * ga * gb / 4.0
        worst_prod = max(worst_prod, abs(d.s1 * d.s2 - target) / max(abs(target), scale ** 2))
        worst_c = max(worst_c, abs(d.c1 + d.c2 - d.a10))
        assert abs(d.a10) ** 2 + abs(d.a20) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert worst_sum < 1e-12
    assert worst_prod < 1e-12
    assert worst_c < 1e-12


def test_scale_covariance():
    base = AtomParams(gamma_a=1.0, gamma_b=0.6, omega_12=0.2, epsilon=0.9,
                      coherence_r=0.4, coherence_theta=2.0, eta=0.15)
    scaled = AtomParams(gamma_a=3.0, gamma_b=1.8, omega_12=0.6, epsilon=0.9,
                        coherence_r=0.4, coherence_theta=2.0, eta=0.15)
    d0, d1 = derive(base), derive(scaled)
    for a, b in [(d0.lam, d1.lam), (d0.s1, d1.s1), (d0.s2, d1.s2)]:
        assert b == pytest.approx(3.0 * a, rel=1e-12)
    assert d1.c1 == pytest.approx(d0.c1, rel=1e-12)
    assert d1.c2 == pytest.approx(d0.c2, rel=1e-12)


def test_validation_rejects_bad_input():
    good = dict(gamma_a=1.0, gamma_b=1.0, omega_12=0.1, epsilon=1.0,
                coherence_r=0.0, coherence_theta=0.0, eta=0.1)
    for key, bad in [("gamma_a", 0.0), ("gamma_a", -1.0), ("gamma_b", math.nan),
                     ("eta", 0.0), ("epsilon", 1.5), ("epsilon", -0.1),
                     ("omega_12", -0.2), ("omega_12", math.inf)]:
        with pytest.raises(ValueError):
            AtomParams(**{**good, key: bad})


def test_theta_reduced_to_standard_interval():
    p = AtomParams(gamma_a=1.0, gamma_b=1.0, omega_12=0.1, epsilon=1.0,
                   coherence_r=0.0, coherence_theta=5 * math.pi, eta=0.1)
    assert p.coherence_theta == pytest.approx(math.pi)


def test_delta_only_defined_for_equal_rates():
    equal = AtomParams.from_dimensionless(0.05, 0.1)
    assert derive(equal).delta == pytest.approx(0.05)
    unequal = AtomParams(gamma_a=1.0, gamma_b=0.5, omega_12=0.05, epsilon=1.0,
                         coherence_r=0.0, coherence_theta=math.pi, eta=0.1)
    assert derive(unequal).delta is None


def test_regime_flags():
    assert AtomParams.from_dimensionless(0.05, 0.1).regime_flags() == []
    wide = AtomParams(gamma_a=1.0, gamma_b=1.0, omega_12=2.0, epsilon=1.0,
                      coherence_r=0.0, coherence_theta=math.pi, eta=0.1)
    assert any("extrapolated" in f for f in wide.regime_flags())
    tilted = AtomParams(gamma_a=1.0, gamma_b=1.0, omega_12=0.05, epsilon=0.8,
                        coherence_r=0.0, coherence_theta=math.pi, eta=0.1)
    assert any("extrapolated" in f for f in tilted.regime_flags())


def test_fingerprint_distinguishes_parameters():
    a = AtomParams.from_dimensionless(0.05, 0.1)
    b = AtomParams.from_dimensionless(0.05, 0.1)
    c = AtomParams.from_dimensionless(0.06, 0.1)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_effective_coordinates_definition_and_roundtrip():
    p = AtomParams.from_dimensionless(0.05, 0.1, gamma=2.0)
    scales = PhysicalScales(omega_a=100.0, mass=5.0, hbar=1.0, c=1.0)
    dk, dq = effective_coordinates(p, scales, k_physical=scales.k0,
                                   q_physical=scales.k0)
    assert dk == 0.0 and dq == 0.0
    for k, q in [(101.0, 99.0), (95.5, 104.2)]:
        dk, dq = effective_coordinates(p, scales, k, q)
        k2, q2 = physical_coordinates(p, scales, dk, dq)
        assert k2 == pytest.approx(k, rel=1e-14)
        assert q2 == pytest.approx(q, rel=1e-14)
    # definition: dk = (k - k0)/(gamma_a/c)
    dk, _ = effective_coordinates(p, scales, 101.0, scales.k0)
    assert dk == pytest.approx((101.0 - scales.k0) / p.gamma_a, rel=1e-14)
