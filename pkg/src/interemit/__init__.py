"""Atom-photon momentum entanglement from interfering two-path emission.

Evaluates the steady-state joint momentum amplitude of a three-level
emitter with two interfering decay paths, measures entanglement with the
conditional/unconditional variance ratio R and the Schmidt mode count K,
and quantifies the phase-carried share as PE = 2.2 K / R.
"""

__version__ = "0.1.0"

from .model import (AtomParams, DerivedParams, PhysicalScales, derive,
                    effective_coordinates, physical_coordinates)
from .amplitude import (DegenerateAmplitudeError, EmptySliceError,
                        GridBudgetError, GridSpec, JointAmplitudeGrid,
                        PoleOnGridError, amplitude_at, dark_state_amplitude_at,
                        decomposition_grid, default_grid_spec, load_grid,
                        resonance_terms, sample_grid, save_grid,
                        separable_fixture_grid)
from .detection import (ScanResult, VarianceReport, conditional_variance,
                        dark_state_variance_ratio_estimate, fwhm,
                        lorentzian_fit, photon_marginal, scan_coherence,
                        unconditional_variance, variance_ratio,
                        variance_ratio_fast)
from .schmidt import (DecompositionError, ModeSuperpositions, SchmidtResult,
                      count_peaks, dark_state_schmidt_number_estimate,
                      density_eigenvalues, mode_profiles_export,
                      mode_superpositions, phase_entanglement,
                      reduced_density_atom, schmidt_decompose, schmidt_number,
                      schmidt_number_grid, schmidt_number_spectral,
                      spectral_eigenvalues, weighted_kernel_matrix)

__all__ = [name for name in dir() if not name.startswith("_")]
