"""Momentum-detection entanglement measures.

Unconditional and conditional variances of the effective atomic momentum,
their ratio R (>= 1, equality for product states), coherence-plane scans of
R / K / PE, Lorentzian profile fits and width extraction.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .model import AtomParams, derive
from .amplitude import (EmptySliceError, JointAmplitudeGrid, ResonanceTerms,
                        resonance_terms, trapezoid_weights)

#: relative mass threshold below which a conditional slice counts as empty
SLICE_MASS_TOL = 1e-12

#: recorded discretization tolerance of the scan paths (relative)
SCAN_TOL = 0.05

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _spike_quadrature(lo: float, hi: float, center: float, alpha: float,
                      smooth_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule resolving a width-``alpha`` resonance.

    Panels shrink geometrically toward ``center`` and never exceed half the
    smooth background scale, so both the narrow spike and the broad envelope
    are integrated to near machine accuracy with a few hundred nodes.
    """
    edges = set(np.linspace(lo, hi, int(math.ceil((hi - lo) / (smooth_scale / 2))) + 1))
    if lo < center < hi:
        edges.add(center)
    d = alpha
    while d < (hi - lo):
        for x in (center - d, center + d):
            if lo < x < hi:
                edges.add(x)
        d *= 3.0
    edges = sorted(edges)
    nodes, weights = [], []
    fine_lo, fine_hi = center - 3 * alpha, center + 3 * alpha
    for a, b in zip(edges[:-1], edges[1:]):
        n = 16 if (a < fine_hi and b > fine_lo) else 12
        x, w = _gauss_legendre(n)
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class VarianceReport:
    """Single-point detection result."""

    var_single: float
    var_coin: float
    dk0: float
    r_ratio: float
    flags: tuple[str, ...] = ()


def dark_state_variance_ratio_estimate(eta: float, delta: float) -> float:
    """Peak variance ratio sqrt(2*pi)*eta/delta^2 at the dark-state coherence."""
    return math.sqrt(2.0 * math.pi) * eta / delta ** 2


# --------------------------------------------------------------------------
# moments of 1-D sampled densities


def _moments_sampled(x: np.ndarray, dens: np.ndarray) -> tuple[float, float, float]:
    w = trapezoid_weights(x)
    m0 = float((dens * w).sum())
    m1 = float((x * dens * w).sum())
    m2 = float((x * x * dens * w).sum())
    return m0, m1, m2


def _variance(m0: float, m1: float, m2: float) -> float:
    return m2 / m0 - (m1 / m0) ** 2


# --------------------------------------------------------------------------
# gridless quadrature core (shared by rotated grids and scans)


def _slice_moments(terms: ResonanceTerms, eta: float, dk0: float,
                   span: float = 4.5) -> tuple[float, float, float]:
    """Moments 0..2 of exp(-2(q/eta)^2) |F(q + dk0)|^2 over q."""
    alpha = max(terms.ridge_half_width, 1e-300)
    lo, hi = -span * eta, span * eta
    center = min(max(terms.ridge_center - dk0, lo), hi)
    q, w = _spike_quadrature(lo, hi, center, alpha, eta)
    f = np.exp(-2.0 * (q / eta) ** 2) * terms.abs2(q + dk0) * w
    return float(f.sum()), float((q * f).sum()), float((q * q * f).sum())


def _marginal_values(terms: ResonanceTerms, eta: float, k_nodes: np.ndarray,
                     span: float = 4.5) -> np.ndarray:
    """Photon marginal P(k) = int |G(q)|^2 |F(q+k)|^2 dq on given nodes.

    Integrates in v = q + k so the narrow resonance sits at a fixed
    location, resolvable by one fine panel set.
    """
    alpha = max(terms.ridge_half_width, 1e-12)
    v0 = terms.ridge_center
    pad = span * eta
    v, wv = _spike_quadrature(float(k_nodes.min()) - pad,
                              float(k_nodes.max()) + pad, v0, alpha, eta)
    f2 = terms.abs2(v) * wv
    out = np.empty(len(k_nodes))
    for j0 in range(0, len(k_nodes), 512):
        sl = slice(j0, min(j0 + 512, len(k_nodes)))
        out[sl] = (f2[:, None] * np.exp(
            -2.0 * ((v[:, None] - k_nodes[None, sl]) / eta) ** 2)).sum(0)
    return out


def _find_dk0(terms: ResonanceTerms, eta: float) -> float:
    """Photon-marginal peak location (parabolically refined)."""
    half = 1.5 * eta + 20.0 * terms.ridge_half_width
    kax = terms.ridge_center + np.linspace(-half, half, 321)
    P = _marginal_values(terms, eta, kax)
    j = int(np.argmax(P))
    if 0 < j < len(kax) - 1:
        dd = P[j - 1] - 2 * P[j] + P[j + 1]
        if dd < 0:
            return float(kax[j] + 0.5 * (P[j - 1] - P[j + 1]) / dd * (kax[1] - kax[0]))
    return float(kax[j])


def variance_ratio_fast(params: AtomParams, dk0_policy="peak_of_photon_marginal",
                        span: float = 4.5) -> VarianceReport:
    """Gridless variance ratio by adaptive quadrature.

    Same contracts as :func:`variance_ratio`; the unconditional variance is
    taken over the q marginal (which is exactly the squared Gaussian
    envelope) and the conditional slice is integrated adaptively, so narrow
    ridges need no materialized grid.  Used by coherence scans.
    """
    terms = resonance_terms(params)
    eta = params.eta
    dk0_star = _find_dk0(terms, eta)
    dk0 = dk0_star if dk0_policy == "peak_of_photon_marginal" else float(dk0_policy)
    q = np.linspace(-span * eta, span * eta, 2001)
    m0, m1, m2 = _moments_sampled(q, np.exp(-2.0 * (q / eta) ** 2))
    var_single = _variance(m0, m1, m2)
    s0, s1, s2 = _slice_moments(terms, eta, dk0, span)
    if dk0 == dk0_star:
        p0 = s0
    else:
        p0, _, _ = _slice_moments(terms, eta, dk0_star, span)
    if not s0 > SLICE_MASS_TOL * p0:
        raise EmptySliceError(
            f"conditional slice at dk0={dk0} carries {s0:.3e} mass, below "
            f"{SLICE_MASS_TOL} of the peak slice mass {p0:.3e}")
    var_coin = _variance(s0, s1, s2)
    flags = tuple(params.regime_flags()) + ("gridless composite-quadrature path",)
    return VarianceReport(var_single=var_single, var_coin=var_coin, dk0=dk0,
                          r_ratio=var_single / var_coin, flags=flags)


# --------------------------------------------------------------------------
# grid-based operations


def unconditional_variance(grid: JointAmplitudeGrid) -> float:
    """Variance of dq over the joint density |B|^2 by grid quadrature."""
    if grid.spec.n_q < 3 or grid.spec.n_k < 3:
        raise ValueError("degenerate grid: need at least 3 nodes per axis")
    marginal = (np.abs(grid.values) ** 2 * grid.wk[None, :]).sum(axis=1)
    m0, m1, m2 = _moments_sampled(grid.q_axis, marginal)
    return _variance(m0, m1, m2)


def photon_marginal(grid: JointAmplitudeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Marginal photon density on the grid's dk nodes.

    For rotated grids the stored v axis is recentred per row, so the marginal
    is re-evaluated from the amplitude itself on the v-node positions.
    """
    if grid.spec.scheme == "uniform":
        P = (np.abs(grid.values) ** 2 * grid.wq[:, None]).sum(axis=0)
        return grid.k_axis, P
    if grid.params is None:
        raise ValueError("rotated grid without parameters cannot form a photon marginal")
    terms = resonance_terms(grid.params, grid.derived)
    P = _marginal_values(terms, grid.params.eta, grid.k_axis)
    return grid.k_axis, P * grid.norm ** 2


def conditional_variance(grid: JointAmplitudeGrid, dk0: float) -> float:
    """Variance of dq over the normalized slice density |B(q, dk0)|^2."""
    if not (grid.k_axis.min() - grid.q_axis.max() <= dk0 <= grid.k_axis.max() - grid.q_axis.min()):
        raise ValueError(f"dk0={dk0} outside the grid's photon range")
    if grid.spec.scheme == "uniform":
        j = int(np.argmin(np.abs(grid.k_axis - dk0)))
        dens = np.abs(grid.values[:, j]) ** 2
        masses = (np.abs(grid.values) ** 2 * grid.wq[:, None]).sum(axis=0)
        m0, m1, m2 = _moments_sampled(grid.q_axis, dens)
        if not m0 > SLICE_MASS_TOL * masses.max():
            raise EmptySliceError(
                f"conditional slice at dk0={dk0} carries {m0:.3e} mass, below "
                f"{SLICE_MASS_TOL} of the peak column mass {masses.max():.3e}")
        return _variance(m0, m1, m2)
    if grid.params is None:
        raise ValueError("rotated grid without parameters cannot be sliced")
    terms = resonance_terms(grid.params, grid.derived)
    eta = grid.params.eta
    span = grid.q_axis.max() / eta
    s0, s1, s2 = _slice_moments(terms, eta, dk0, span)
    p0, _, _ = _slice_moments(terms, eta, _find_dk0(terms, eta), span)
    if not s0 > SLICE_MASS_TOL * p0:
        raise EmptySliceError(
            f"conditional slice at dk0={dk0} carries {s0:.3e} mass, below "
            f"{SLICE_MASS_TOL} of the peak slice mass {p0:.3e}")
    return _variance(s0, s1, s2)


def variance_ratio(grid: JointAmplitudeGrid,
                   dk0_policy="peak_of_photon_marginal") -> VarianceReport:
    """Variance ratio R = var_single / var_coin for a sampled grid.

    ``dk0_policy`` is either the string 'peak_of_photon_marginal' (condition
    at the argmax of the photon marginal) or an explicit dk0 value.
    """
    if dk0_policy == "peak_of_photon_marginal":
        kn, P = photon_marginal(grid)
        if grid.spec.scheme == "rotated":
            terms = resonance_terms(grid.params, grid.derived)
            dk0 = _find_dk0(terms, grid.params.eta)
        else:
            dk0 = float(kn[int(np.argmax(P))])
    else:
        dk0 = float(dk0_policy)
    var_single = unconditional_variance(grid)
    var_coin = conditional_variance(grid, dk0)
    return VarianceReport(var_single=var_single, var_coin=var_coin, dk0=dk0,
                          r_ratio=var_single / var_coin, flags=grid.flags)


# --------------------------------------------------------------------------
# profiles


def fwhm(x, y) -> float:
    """Full width between the half-maximum crossings of a sampled profile.

    Crossings are located by linear interpolation.  Returns NaN when the
    profile never falls below half maximum on one side (unbounded case,
    including maxima at the domain edge).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3 or len(x) != len(y):
        raise ValueError("profile needs at least 3 samples of matching length")
    i = int(np.nanargmax(y))
    if i == 0 or i == len(y) - 1:
        return math.nan
    half = y[i] / 2.0
    lo = hi = None
    for j in range(i, 0, -1):
        if y[j - 1] < half <= y[j]:
            lo = x[j - 1] + (half - y[j - 1]) * (x[j] - x[j - 1]) / (y[j] - y[j - 1])
            break
    for j in range(i, len(y) - 1):
        if y[j + 1] < half <= y[j]:
            hi = x[j] + (y[j] - half) * (x[j + 1] - x[j]) / (y[j] - y[j + 1])
            break
    if lo is None or hi is None:
        return math.nan
    return float(hi - lo)


def lorentzian_fit(x, y) -> dict | None:
    """Least-squares fit of A / (1 + ((x-x0)/w)^2); w is the half width.

    Returns a dict with amplitude, center, half_width and the RMS residual
    relative to the profile peak, or None when the fit fails.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) < 5:
        return None
    model = lambda t, A, t0, w: A / (1.0 + ((t - t0) / w) ** 2)
    width_guess = fwhm(x, y)
    if not math.isfinite(width_guess):
        width_guess = (x[-1] - x[0]) / 2.0
    guess = [float(y.max()), float(x[int(np.argmax(y))]),
             max(width_guess / 2.0, (x[-1] - x[0]) / 100.0)]
    try:
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # near-perfect fits lack a covariance
            popt, _ = curve_fit(model, x, y, p0=guess, maxfev=20000)
    except (RuntimeError, ValueError):
        return None
    resid = float(np.sqrt(np.mean((y - model(x, *popt)) ** 2)) / y.max())
    return {"amplitude": float(popt[0]), "center": float(popt[1]),
            "half_width": abs(float(popt[2])), "rms_residual_rel": resid}


# --------------------------------------------------------------------------
# coherence scans


@dataclass
class ScanResult:
    """Dense metric map over the coherence plane with peak and width summary."""

    axis_r: np.ndarray
    axis_theta: np.ndarray
    metric: str
    values: np.ndarray
    peak: tuple[float, float, float]
    fwhm_r: float | None
    fwhm_theta: float | None
    n_missing: int
    tol: float
    flags: tuple[str, ...]
    fit_r: dict | None = None
    fit_theta: dict | None = None


def coherence_half_width(params: AtomParams) -> float:
    """Half width 2*delta_eff/eta of the detection peak in the (r, theta) plane."""
    terms = resonance_terms(params)
    delta_eff = 2.0 * math.sqrt(max(terms.ridge_half_width, 0.0))
    return 2.0 * delta_eff / params.eta


def default_r_axis(params: AtomParams, n: int = 101) -> np.ndarray:
    """+- 3 detection half-widths around the dark-state coherence."""
    span = 3.0 * coherence_half_width(params)
    return np.linspace(-span, span, n)


def default_theta_axis(n: int = 101) -> np.ndarray:
    """Full phase circle, sampled inclusively so theta = pi is a node."""
    return np.linspace(0.0, 2.0 * math.pi, n)


def _scan_node(params: AtomParams, metric: str, spectral_tail: float) -> float:
    if metric == "R":
        return variance_ratio_fast(params).r_ratio
    from .schmidt import phase_entanglement, schmidt_number_spectral
    if metric == "K":
        return schmidt_number_spectral(params, tail=spectral_tail)
    if metric == "PE":
        k = schmidt_number_spectral(params, tail=spectral_tail)
        r = variance_ratio_fast(params).r_ratio
        return phase_entanglement(k, r)
    raise ValueError(f"unknown scan metric {metric!r}")


def scan_coherence(params_base: AtomParams, r_axis=None, theta_axis=None,
                   metric: str = "R", *, workers: int = 0,
                   spectral_tail: float = 1e-6) -> ScanResult:
    """Dense metric map over initial-coherence values (r, theta).

    Per-node failures degrade to missing values (NaN) and are counted, so a
    pathological node cannot abort a long sweep.  Node ordering is
    deterministic; an optional thread pool only parallelizes evaluation.
    """
    r_axis = default_r_axis(params_base) if r_axis is None else np.asarray(r_axis, float)
    theta_axis = default_theta_axis() if theta_axis is None else np.asarray(theta_axis, float)
    if r_axis.size == 0 or theta_axis.size == 0:
        raise ValueError("scan axes must be non-empty")
    if np.any(np.diff(r_axis) <= 0) or np.any(np.diff(theta_axis) <= 0):
        raise ValueError("scan axes must be strictly increasing")

    nodes = [(i, j,
              AtomParams(gamma_a=params_base.gamma_a, gamma_b=params_base.gamma_b,
                         omega_12=params_base.omega_12, epsilon=params_base.epsilon,
                         coherence_r=float(rv), coherence_theta=float(tv),
                         eta=params_base.eta))
             for i, rv in enumerate(r_axis) for j, tv in enumerate(theta_axis)]

    def run(node):
        i, j, p = node
        try:
            return i, j, _scan_node(p, metric, spectral_tail), None
        except Exception as exc:  # degrade, never abort the sweep
            return i, j, math.nan, f"node (r={p.coherence_r:.4g}, theta={p.coherence_theta:.4g}): {exc}"

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, nodes))
    else:
        results = [run(node) for node in nodes]

    values = np.full((len(r_axis), len(theta_axis)), math.nan)
    failures = []
    for i, j, val, err in results:
        values[i, j] = val
        if err:
            failures.append(err)

    flags = list(params_base.regime_flags())
    flags.extend(failures[:5])
    if np.all(np.isnan(values)):
        peak = (math.nan, math.nan, math.nan)
        w_r = w_t = None
        fit_r = fit_t = None
    else:
        pi, pj = np.unravel_index(np.nanargmax(values), values.shape)
        peak = (float(r_axis[pi]), float(theta_axis[pj]), float(values[pi, pj]))
        cut_r, cut_t = values[:, pj], values[pi, :]
        w_r = fwhm(r_axis, cut_r) if len(r_axis) > 2 else math.nan
        w_t = fwhm(theta_axis, cut_t) if len(theta_axis) > 2 else math.nan
        fit_r = lorentzian_fit(r_axis, cut_r) if len(r_axis) > 4 else None
        fit_t = lorentzian_fit(theta_axis, cut_t) if len(theta_axis) > 4 else None
        if math.isnan(w_r):
            flags.append("fwhm_r unbounded: no half-maximum crossing on both sides")
            w_r = None
        if math.isnan(w_t):
            flags.append("fwhm_theta unbounded: no half-maximum crossing on both sides")
            w_t = None
    return ScanResult(axis_r=r_axis, axis_theta=theta_axis, metric=metric,
                      values=values, peak=peak, fwhm_r=w_r, fwhm_theta=w_t,
                      n_missing=len(failures), tol=SCAN_TOL, flags=tuple(flags),
                      fit_r=fit_r, fit_theta=fit_t)
