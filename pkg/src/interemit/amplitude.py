"""Steady-state joint momentum amplitude of the interfering emitter.

The amplitude factorizes as B(dq, dk) = exp(-(dq/eta)^2) * F(dq + dk) where
F is a two-pole resonance ("ridge") factor.  This module evaluates B, builds
normalized sampled grids in two schemes (plain tensor product in (dq, dk),
or sheared coordinates u = dq, v = dq + dk aligned with the ridge), and
handles grid export.
"""
from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad

from .model import AtomParams, DerivedParams, derive

#: node budget for materialized grids (complex128 values)
DEFAULT_MAX_NODES = 20_000_000

#: denominators smaller than this are treated as a pole on the grid
POLE_TOL = 1e-14

#: coefficient scale below which the amplitude is identically zero
TRAPPING_TOL = 1e-13


class DegenerateAmplitudeError(RuntimeError):
    """Amplitude is identically zero or its pole structure degenerates."""


class PoleOnGridError(RuntimeError):
    """A resonance denominator vanishes at a requested sample point."""


class GridBudgetError(RuntimeError):
    """Requested grid exceeds the configured node budget."""


class EmptySliceError(RuntimeError):
    """Conditional slice carries negligible probability mass."""


# --------------------------------------------------------------------------
# ridge factor


@dataclass(frozen=True)
class ResonanceTerms:
    """Weights and pole constants of F(v) = w1/(i v + p1) + w2/(i v + p2).

    Weights are the products of the partial amplitudes with their coupling
    numerators, evaluated in a product form that stays finite for all
    epsilon in [0, 1].  Both poles satisfy Re p_i <= 0 for physical input.
    """

    w1: complex
    w2: complex
    p1: complex
    p2: complex

    @property
    def ridge_half_width(self) -> float:
        """Half width of the narrower resonance in v."""
        return min(abs(self.p1.real), abs(self.p2.real))

    @property
    def broad_half_width(self) -> float:
        return max(abs(self.p1.real), abs(self.p2.real))

    @property
    def ridge_center(self) -> float:
        """v position of the narrow resonance."""
        p = self.p1 if abs(self.p1.real) <= abs(self.p2.real) else self.p2
        return -p.imag

    @property
    def is_trapping(self) -> bool:
        scale = max(abs(self.w1), abs(self.w2), 1.0)
        return max(abs(self.w1), abs(self.w2)) < TRAPPING_TOL * scale or \
            (abs(self.w1) < TRAPPING_TOL and abs(self.w2) < TRAPPING_TOL)

    def __call__(self, v):
        v = np.asarray(v)
        return self.w1 / (1j * v + self.p1) + self.w2 / (1j * v + self.p2)

    def abs2(self, v):
        return np.abs(self(v)) ** 2

    def norm_sq(self) -> float:
        """Closed-form full-line integral of |F|^2 over v."""
        total = 0.0j
        for wa, pa in ((self.w1, self.p1), (self.w2, self.p2)):
            for wb, pb in ((self.w1, self.p1), (self.w2, self.p2)):
                total += wa * np.conj(wb) * (-2.0 * math.pi) / (pa + np.conj(pb))
        return float(total.real)


def resonance_terms(params: AtomParams, derived: DerivedParams | None = None) -> ResonanceTerms:
    """Build the ridge factor for a parameter set.

    Raises DegenerateAmplitudeError when the two poles coalesce
    (the partial-fraction form breaks down).
    """
    d = derive(params) if derived is None else derived
    ga, gb = params.gamma_a, params.gamma_b
    eps = params.epsilon
    sg = math.sqrt(ga * gb)
    g_a, g_b = 1.0, d.g_ratio
    split = d.s2 - d.s1
    if abs(split) < 1e-12 * max(ga, gb):
        raise DegenerateAmplitudeError(
            "coalescing emission poles (s1 == s2); the two-pole amplitude "
            "form is singular at these parameters")
    # products C_i * N_i expanded so no bare 1/epsilon appears
    w1 = (-0.5 * eps * sg * g_b * d.a10 - g_a * d.s2 * d.a10
          + g_b * d.s1 * d.a20 - 0.5 * eps * sg * g_a * d.a20) / split
    w2 = -(-0.5 * eps * sg * g_b * d.a10 - g_a * d.s1 * d.a10
           + g_b * d.s2 * d.a20 - 0.5 * eps * sg * g_a * d.a20) / split
    p1, p2 = d.pole_shifts(ga)
    return ResonanceTerms(w1=complex(w1), w2=complex(w2),
                          p1=complex(p1), p2=complex(p2))


def _check_poles(terms: ResonanceTerms, v: np.ndarray) -> None:
    for p in (terms.p1, terms.p2):
        if abs(p.real) < POLE_TOL:
            d = np.abs(1j * np.asarray(v) + p)
            if d.size and d.min() < POLE_TOL:
                raise PoleOnGridError(
                    f"resonance denominator magnitude {d.min():.3e} below "
                    f"{POLE_TOL} at v = {np.asarray(v).flat[int(d.argmin())]!r}")


def amplitude_at(derived: DerivedParams, params: AtomParams, dq, dk):
    """Unnormalized joint amplitude B(dq, dk); accepts scalars or arrays."""
    terms = resonance_terms(params, derived)
    dq = np.asarray(dq, dtype=float)
    dk = np.asarray(dk, dtype=float)
    v = dq + dk
    if terms.is_trapping:  # destructive interference kills both weights
        out = np.zeros(np.broadcast(dq, dk).shape, dtype=complex)
        return complex(0) if out.ndim == 0 else out
    _check_poles(terms, v)
    out = np.exp(-((dq / params.eta) ** 2)) * terms(v)
    return complex(out) if out.ndim == 0 else out


def dark_state_amplitude_at(delta: float, eta: float, dq, dk):
    """Single-pole dark-state form: exp(-(dq/eta)^2) / (i(dq+dk) - delta^2/4)."""
    if delta <= 0 or eta <= 0:
        raise ValueError("delta and eta must be positive")
    dq = np.asarray(dq, dtype=float)
    dk = np.asarray(dk, dtype=float)
    out = np.exp(-((dq / eta) ** 2)) / (1j * (dq + dk) - delta ** 2 / 4.0)
    return complex(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    """Requested sampling window and counts.

    scheme 'uniform' samples a tensor grid in (dq, dk); 'rotated' samples the
    sheared coordinates u = dq (q_min..q_max) and v = dq + dk (k_min..k_max),
    which aligns the second axis with the resonance ridge.
    """

    q_min: float
    q_max: float
    k_min: float
    k_max: float
    n_q: int
    n_k: int
    scheme: str = "uniform"

    def __post_init__(self):
        if not (self.q_min < self.q_max and self.k_min < self.k_max):
            raise ValueError("grid bounds must satisfy min < max")
        if self.n_q < 2 or self.n_k < 2:
            raise ValueError("grids need at least 2 samples per axis")
        if self.scheme not in ("uniform", "rotated"):
            raise ValueError(f"unknown grid scheme {self.scheme!r}")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.linspace(self.q_min, self.q_max, self.n_q),
                np.linspace(self.k_min, self.k_max, self.n_k))

    def as_dict(self) -> dict:
        return {"q_min": self.q_min, "q_max": self.q_max,
                "k_min": self.k_min, "k_max": self.k_max,
                "n_q": self.n_q, "n_k": self.n_k, "scheme": self.scheme}


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    if len(x) < 2:
        return np.ones_like(x)
    w[1:-1] = (x[2:] - x[:-2]) / 2.0
    w[0] = (x[1] - x[0]) / 2.0
    w[-1] = (x[-1] - x[-2]) / 2.0
    return w


@dataclass(frozen=True)
class JointAmplitudeGrid:
    """Normalized sampled kernel with its quadrature metadata.

    For scheme 'uniform', values[i, j] = B(q_axis[i], k_axis[j]).
    For scheme 'rotated', the axes hold u and v nodes and
    values[i, j] = B(u_i, v_j - u_i); the shear has unit Jacobian so the
    same product quadrature weights apply.
    """

    spec: GridSpec
    q_axis: np.ndarray
    k_axis: np.ndarray
    values: np.ndarray
    norm: float
    params_fingerprint: str
    params: AtomParams | None = None
    derived: DerivedParams | None = None
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def wq(self) -> np.ndarray:
        return trapezoid_weights(self.q_axis)

    @property
    def wk(self) -> np.ndarray:
        return trapezoid_weights(self.k_axis)

    def total_mass(self) -> float:
        return float(np.einsum("i,ij,j->", self.wq, np.abs(self.values) ** 2, self.wk))

    def photon_coordinate(self, j: int) -> np.ndarray:
        """dk of column j for every row (constant for uniform grids)."""
        if self.spec.scheme == "rotated":
            return self.k_axis[j] - self.q_axis
        return np.full_like(self.q_axis, self.k_axis[j])


def _normalized_grid(spec, q_axis, k_axis, raw, params, derived, flags):
    wq, wk = trapezoid_weights(q_axis), trapezoid_weights(k_axis)
    mass = float(np.einsum("i,ij,j->", wq, np.abs(raw) ** 2, wk))
    if not math.isfinite(mass) or mass <= 0.0:
        raise DegenerateAmplitudeError(
            "identically zero amplitude, nothing to normalize")
    norm = 1.0 / math.sqrt(mass)
    fp = params.fingerprint() if params is not None else "synthetic"
    return JointAmplitudeGrid(spec=spec, q_axis=q_axis, k_axis=k_axis,
                              values=raw * norm, norm=norm,
                              params_fingerprint=fp, params=params,
                              derived=derived, flags=tuple(flags))


def _adequacy_flags(spec: GridSpec, terms: ResonanceTerms) -> list[str]:
    alpha = terms.ridge_half_width
    if spec.scheme == "rotated":
        ridge_step = (spec.k_max - spec.k_min) / (spec.n_k - 1)
    else:
        ridge_step = max((spec.q_max - spec.q_min) / (spec.n_q - 1),
                         (spec.k_max - spec.k_min) / (spec.n_k - 1))
    if alpha > 0 and ridge_step > alpha / 4.0:
        return [f"resolution inadequate: ridge step {ridge_step:.3e} exceeds "
                f"quarter half-width {alpha / 4.0:.3e}"]
    return []


def default_grid_spec(params: AtomParams, scheme: str = "rotated",
                      grid_scale: float = 1.0, span: float = 4.0) -> GridSpec:
    """Auto-sized sampling window for a parameter set.

    The rotated default spans u in +-span*eta and v in the ridge center
    +- max(50 half-widths, 5 eta), sampled at 8 nodes per half-width.
    """
    terms = resonance_terms(params)
    if terms.is_trapping:
        raise DegenerateAmplitudeError(
            "identically zero amplitude, nothing to normalize")
    eta = params.eta
    alpha = terms.ridge_half_width
    v0 = terms.ridge_center
    if scheme == "rotated":
        v_half = max(50.0 * alpha, 5.0 * eta)
        n_u = int(round(120 * grid_scale)) * 2 + 1
        n_v = int(math.ceil(2 * v_half / (alpha / (8.0 * grid_scale)))) + 1
        n_v = min(n_v, 600_000)
        return GridSpec(q_min=-span * eta, q_max=span * eta,
                        k_min=v0 - v_half, k_max=v0 + v_half,
                        n_q=n_u, n_k=n_v, scheme="rotated")
    k_half = span * eta + max(50.0 * alpha, 0.5)
    n = int(round(600 * grid_scale)) * 2 + 1
    return GridSpec(q_min=-span * eta, q_max=span * eta,
                    k_min=v0 - k_half, k_max=v0 + k_half,
                    n_q=n, n_k=n, scheme="uniform")


def sample_grid(params: AtomParams, spec: GridSpec | None = None, *,
                grid_scale: float = 1.0,
                max_nodes: int = DEFAULT_MAX_NODES) -> JointAmplitudeGrid:
    """Sample and L2-normalize the joint amplitude on a grid.

    Deterministic for fixed inputs.  Raises GridBudgetError over budget,
    DegenerateAmplitudeError for an identically zero amplitude and
    PoleOnGridError when a node hits a vanishing denominator.
    """
    derived = derive(params)
    terms = resonance_terms(params, derived)
    if terms.is_trapping:
        raise DegenerateAmplitudeError(
            "identically zero amplitude, nothing to normalize")
    if spec is None:
        spec = default_grid_spec(params, grid_scale=grid_scale)
    if spec.n_q * spec.n_k > max_nodes:
        raise GridBudgetError(
            f"grid of {spec.n_q} x {spec.n_k} nodes exceeds budget "
            f"{max_nodes}; coarsen the grid or raise max_nodes")
    qa, ka = spec.axes()
    gauss = np.exp(-((qa / params.eta) ** 2))
    if spec.scheme == "rotated":
        _check_poles(terms, ka)
        raw = gauss[:, None] * terms(ka)[None, :]
    else:
        v = qa[:, None] + ka[None, :]
        _check_poles(terms, v.ravel())
        raw = gauss[:, None] * terms(v)
    flags = _adequacy_flags(spec, terms) + params.regime_flags()
    return _normalized_grid(spec, qa, ka, raw, params, derived, flags)


def decomposition_grid(params: AtomParams, *, grid_scale: float = 1.0,
                       span: float = 4.0, core_halfwidths: float = 60.0,
                       wing_ratio: float = 1.12, wing_tail: float = 3e-4,
                       max_nodes: int = DEFAULT_MAX_NODES) -> JointAmplitudeGrid:
    """Tensor (dq, dk) grid sized for Schmidt decomposition.

    The dk axis has a uniform core covering the populated ridge for every dq
    under the Gaussian envelope, extended by geometric wings until the
    truncated tail of |F|^2 falls below ``wing_tail`` of its full mass.
    Spacing resolves the narrow resonance (about 1.5 nodes per half-width
    at grid_scale 1).
    """
    derived = derive(params)
    terms = resonance_terms(params, derived)
    if terms.is_trapping:
        raise DegenerateAmplitudeError(
            "identically zero amplitude, nothing to normalize")
    eta = params.eta
    alpha = terms.ridge_half_width
    if alpha <= 0:
        raise DegenerateAmplitudeError("zero-width resonance; cannot sample")
    v0 = terms.ridge_center
    step = min(alpha / 1.5, eta / 8.0) / grid_scale
    n_q = int(math.ceil(2 * span * eta / step)) + 1
    qa = np.linspace(-span * eta, span * eta, n_q)

    core_half = span * eta + core_halfwidths * alpha
    n_core = int(math.ceil(2 * core_half / step)) + 1
    core = np.linspace(v0 - core_half, v0 + core_half, n_core)
    step = core[1] - core[0]
    full = terms.norm_sq()
    wing = max(4.0 * core_half, 2.0)
    while wing < 400.0:
        tail_hi = quad(terms.abs2, core[-1], core[-1] + wing, limit=200)[0]
        tail_hi += quad(terms.abs2, core[-1] + wing, np.inf, limit=200)[0]
        tail_lo = quad(terms.abs2, core[0] - wing, core[0], limit=200)[0]
        tail_lo += quad(terms.abs2, -np.inf, core[0] - wing, limit=200)[0]
        if (tail_hi + tail_lo) / full < wing_tail:
            break
        wing *= 2.0
    steps, x = [], step
    acc = 0.0
    while acc < wing:
        acc += x
        steps.append(acc)
        x *= wing_ratio
    right = core[-1] + np.asarray(steps)
    left = core[0] - np.asarray(steps)[::-1]
    ka = np.concatenate([left, core, right])

    if len(qa) * len(ka) > max_nodes:
        raise GridBudgetError(
            f"decomposition grid of {len(qa)} x {len(ka)} nodes exceeds "
            f"budget {max_nodes}; coarsen with grid_scale < 1 or raise max_nodes")
    spec = GridSpec(q_min=float(qa[0]), q_max=float(qa[-1]),
                    k_min=float(ka[0]), k_max=float(ka[-1]),
                    n_q=len(qa), n_k=len(ka), scheme="uniform")
    gauss = np.exp(-((qa / eta) ** 2))
    raw = np.empty((len(qa), len(ka)), dtype=complex)
    blk = max(1, int(4e6 // max(len(ka), 1)))
    for i0 in range(0, len(qa), blk):
        sl = slice(i0, min(i0 + blk, len(qa)))
        raw[sl] = gauss[sl, None] * terms(qa[sl, None] + ka[None, :])
    flags = params.regime_flags()
    return _normalized_grid(spec, qa, ka, raw, params, derived, flags)


def separable_fixture_grid(eta: float = 0.1, kappa: float = 0.5,
                           n_q: int = 241, n_k: int = 241) -> JointAmplitudeGrid:
    """Built-in product-state fixture: Gaussian(dq) x Gaussian(dk).

    Exactly separable, hence unit variance ratio and unit Schmidt number.
    """
    spec = GridSpec(q_min=-4 * eta, q_max=4 * eta, k_min=-4 * kappa,
                    k_max=4 * kappa, n_q=n_q, n_k=n_k, scheme="uniform")
    qa, ka = spec.axes()
    raw = np.exp(-((qa / eta) ** 2))[:, None] * np.exp(-((ka / kappa) ** 2))[None, :]
    grid = _normalized_grid(spec, qa, ka, raw.astype(complex), None, None,
                            ("fixture: separable product kernel",))
    return replace(grid, params_fingerprint="fixture:separable")


# --------------------------------------------------------------------------
# export

GRID_SCHEMA_VERSION = 1
#: node count below which a CSV companion is written
CSV_NODE_LIMIT = 250_000


def grid_header(grid: JointAmplitudeGrid) -> dict:
    return {
        "schema_version": GRID_SCHEMA_VERSION,
        "kind": "interemit/amplitude-grid",
        "n_q": grid.spec.n_q,
        "n_k": grid.spec.n_k,
        "q_min": grid.spec.q_min, "q_max": grid.spec.q_max,
        "k_min": grid.spec.k_min, "k_max": grid.spec.k_max,
        "scheme": grid.spec.scheme,
        "norm": grid.norm,
        "total_mass": grid.total_mass(),
        "params_fingerprint": grid.params_fingerprint,
        "params": grid.params.as_dict() if grid.params is not None else None,
        "flags": list(grid.flags),
    }


def _write_npz_deterministic(path: str, arrays: dict) -> None:
    # fixed zip timestamps so identical grids produce identical bytes
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.save(buf, arr)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def save_grid(grid: JointAmplitudeGrid, path: str, *, csv_limit: int = CSV_NODE_LIMIT) -> list[str]:
    """Write the grid as a self-describing .npz (plus CSV when small).

    Byte-identical for identical grids.  Returns the list of files written.
    """
    header = json.dumps(grid_header(grid), sort_keys=True)
    target = path if path.endswith(".npz") else path + ".npz"
    _write_npz_deterministic(target, {
        "header_json": np.array(header),
        "q_axis": grid.q_axis,
        "k_axis": grid.k_axis,
        "values": grid.values,
    })
    written = [target]
    if grid.spec.n_q * grid.spec.n_k <= csv_limit:
        csv_path = written[0].removesuffix(".npz") + ".csv"
        with open(csv_path, "w") as fh:
            fh.write(f"# {header}\n")
            fh.write("dq,dk,re_b,im_b\n")
            for i, qv in enumerate(grid.q_axis):
                for j, kv in enumerate(grid.k_axis):
                    dk = kv - qv if grid.spec.scheme == "rotated" else kv
                    b = grid.values[i, j]
                    fh.write(f"{qv:.12g},{dk:.12g},{b.real:.12g},{b.imag:.12g}\n")
        written.append(csv_path)
    return written


def load_grid(path: str) -> JointAmplitudeGrid:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header_json"]))
        qa, ka, values = data["q_axis"], data["k_axis"], data["values"]
    spec = GridSpec(q_min=header["q_min"], q_max=header["q_max"],
                    k_min=header["k_min"], k_max=header["k_max"],
                    n_q=header["n_q"], n_k=header["n_k"],
                    scheme=header["scheme"])
    params = AtomParams(**header["params"]) if header.get("params") else None
    derived = derive(params) if params is not None else None
    return JointAmplitudeGrid(spec=spec, q_axis=qa, k_axis=ka, values=values,
                              norm=header["norm"],
                              params_fingerprint=header["params_fingerprint"],
                              params=params, derived=derived,
                              flags=tuple(header.get("flags", ())))
