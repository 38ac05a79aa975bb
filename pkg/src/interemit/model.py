"""Physical parameters of the interfering two-path emitter and derived algebra.

A three-level atom with two closely spaced upper levels decays to a common
ground state along two dipole transitions (rates ``gamma_a``, ``gamma_b``).
The initial upper-level coherence is parametrized by a log-magnitude ``r``
and phase ``theta`` of the amplitude ratio, and the center-of-mass wavepacket
by the dimensionless recoil parameter ``eta``.  Everything downstream
(joint amplitude, variance ratios, Schmidt spectra) is built from the
composite quantities computed here.
"""
from __future__ import annotations

import cmath
import hashlib
import json
import math
from dataclasses import dataclass, asdict

TWO_PI = 2.0 * math.pi

#: relative linewidth mismatch below which the two rates count as equal
EQUAL_RATE_TOL = 1e-9


@dataclass(frozen=True)
class AtomParams:
    """Physical inputs, all rates in units of an arbitrary common rate scale.

    gamma_a, gamma_b : transition linewidths (> 0); gamma_a sets the scale
    omega_12         : upper-level splitting (>= 0, same units)
    epsilon          : dipole alignment, mu_a.mu_b/(|mu_a||mu_b|), in [0, 1]
    coherence_r      : log magnitude of the upper-amplitude ratio A10/A20
    coherence_theta  : phase of A10/A20, stored reduced to [0, 2*pi)
    eta              : wavepacket parameter, width * recoil / gamma_a (> 0)
    """

    gamma_a: float
    gamma_b: float
    omega_12: float
    epsilon: float
    coherence_r: float
    coherence_theta: float
    eta: float

    def __post_init__(self):
        values = asdict(self)
        for name, value in values.items():
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite real number, got {value!r}")
        if self.gamma_a <= 0 or self.gamma_b <= 0:
            raise ValueError("linewidths gamma_a, gamma_b must be positive")
        if self.omega_12 < 0:
            raise ValueError("upper-level splitting omega_12 must be nonnegative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("dipole alignment epsilon must lie in [0, 1]")
        if self.eta <= 0:
            raise ValueError("wavepacket parameter eta must be positive")
        object.__setattr__(self, "coherence_theta", self.coherence_theta % TWO_PI)

    @classmethod
    def from_dimensionless(cls, delta: float, eta: float,
                           coherence_r: float = 0.0,
                           coherence_theta: float = math.pi,
                           gamma: float = 1.0) -> "AtomParams":
        """Equal-linewidth constructor from (delta, eta) with delta = omega_12/gamma."""
        return cls(gamma_a=gamma, gamma_b=gamma, omega_12=delta * gamma,
                   epsilon=1.0, coherence_r=coherence_r,
                   coherence_theta=coherence_theta, eta=eta)

    @property
    def in_validated_regime(self) -> bool:
        """Strong-interference regime: near-degenerate levels, parallel dipoles."""
        return (self.omega_12 < min(self.gamma_a, self.gamma_b)
                and self.epsilon == 1.0)

    def regime_flags(self) -> list[str]:
        flags = []
        if not self.in_validated_regime:
            flags.append("extrapolated: outside strong-interference regime "
                         "(requires omega_12 < min(gamma_a, gamma_b) and epsilon = 1)")
        return flags

    def as_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        """Digest identifying this parameter set (stable across runs)."""
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class DerivedParams:
    """Composite complex quantities of the two-path decay algebra.

    s1, s2 are the roots of s^2 - lam*s - eps^2*gamma_a*gamma_b/4 = 0 with
    s1 carrying the principal (+) branch of the square root; c1, c2 are the
    partial amplitudes attached to them (c1 + c2 = a10).  ``delta`` is the
    splitting in linewidth units, defined only for equal rates, else None.
    """

    lam: complex
    s1: complex
    s2: complex
    c1: complex
    c2: complex
    delta: float | None
    a10: complex
    a20: complex
    g_ratio: float

    def pole_shifts(self, gamma_a: float) -> tuple[complex, complex]:
        """Denominator constants p_i = s_i/gamma_a - 1/2 of the ridge factor."""
        return self.s1 / gamma_a - 0.5, self.s2 / gamma_a - 0.5


def derive(params: AtomParams) -> DerivedParams:
    """Evaluate the derived two-path quantities for a parameter set.

    The initial amplitudes are normalized to unit total population with
    a20 real positive; observables do not depend on that overall phase.
    """
    ga, gb = params.gamma_a, params.gamma_b
    eps = params.epsilon
    lam = complex(ga - gb, 2.0 * params.omega_12) / 2.0
    root = cmath.sqrt(lam * lam + eps * eps * ga * gb)
    s1 = (lam + root) / 2.0
    s2 = (lam - root) / 2.0

    a20 = complex(1.0 / math.sqrt(1.0 + math.exp(2.0 * params.coherence_r)), 0.0)
    a10 = cmath.exp(complex(params.coherence_r, params.coherence_theta)) * a20

    sg = math.sqrt(ga * gb)
    c1 = (s2 * a10 + 0.5 * eps * sg * a20) / (s2 - s1)
    c2 = -(s1 * a10 + 0.5 * eps * sg * a20) / (s2 - s1)

    if abs(ga - gb) / ga < EQUAL_RATE_TOL:
        delta: float | None = params.omega_12 / ga
    else:
        delta = None

    return DerivedParams(lam=lam, s1=s1, s2=s2, c1=c1, c2=c2, delta=delta,
                         a10=a10, a20=a20, g_ratio=math.sqrt(gb / ga))


@dataclass(frozen=True)
class PhysicalScales:
    """Absolute scales mapping lab coordinates to effective ones.

    omega_a : angular frequency of transition a
    mass    : atomic mass
    hbar, c : unit-system constants (default 1 for natural units)
    """

    omega_a: float
    mass: float
    hbar: float = 1.0
    c: float = 1.0

    @property
    def k0(self) -> float:
        return self.omega_a / self.c

    def recoil_per_rate(self, gamma_a: float) -> float:
        return self.hbar * self.k0 / (self.mass * gamma_a)


def effective_coordinates(params: AtomParams, scales: PhysicalScales,
                          k_physical: float, q_physical: float) -> tuple[float, float]:
    """Map lab wave numbers to the dimensionless (dk, dq) detunings.

    dk = (k - k0) / (gamma_a / c),  dq = (hbar*k0 / (m*gamma_a)) * (q - k0).
    """
    dk = (k_physical - scales.k0) * scales.c / params.gamma_a
    dq = scales.recoil_per_rate(params.gamma_a) * (q_physical - scales.k0)
    return dk, dq


def physical_coordinates(params: AtomParams, scales: PhysicalScales,
                         dk: float, dq: float) -> tuple[float, float]:
    """Inverse of :func:`effective_coordinates`."""
    k_physical = scales.k0 + dk * params.gamma_a / scales.c
    q_physical = scales.k0 + dq / scales.recoil_per_rate(params.gamma_a)
    return k_physical, q_physical
