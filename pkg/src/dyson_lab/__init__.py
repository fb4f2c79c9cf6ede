"""Numerical laboratory for self-consistent Dyson equations of
non-Hermitian random matrices with a general variance profile.

The package solves the two-vector self-consistent equation and its
2n-by-2n matrix form, analyzes the two unstable directions of the
associated stability map at the spectral edge, computes the limiting
eigenvalue density through the logarithmic potential, and checks the
resulting spectral-radius, local-law and delocalization predictions by
reproducible desk-scale Monte Carlo experiments.
"""

__version__ = "0.1.0"

from .calibration import CALIBRATION, Calibration
from .density import (DensityProfile, QuadratureOptions, ScaleTable,
                      fluctuation_scale, log_potential, scale_table,
                      sigma_radial)
from .ensemble import (RadialBump, SampleSpec, HermitizedSystem,
                       eigenvalue_count_near_zero, error_matrix_D, hermitize,
                       resolvent, resolvent_error, sample_matrix)
from .errors import ConfigError, NumericalError, ProfileError, RegimeError
from .experiments import (ExperimentReport, circular_law_experiment,
                          count_experiment, cubic_residual_experiment,
                          delocalization_check, delocalization_metric,
                          ginibre_reference_gap, girko_check, girko_refinement,
                          local_law_experiment, spectral_radius_experiment)
from .profiles import (VarianceProfile, make_profile, normalize,
                       profile_from_entries, profile_from_json,
                       profile_from_json_dict, spectral_radius)
from .solver import (DysonSolution, MdeMatrices, SolverOptions,
                     assemble_matrices, eta_derivative_check, mde_residual,
                     solve_dyson, solve_dyson_path, solve_mean_imag_grid)
from .stability import (CubicCoefficients, StabilitySpectrum, apply_Binv_Q,
                        apply_stability, apply_stability_adjoint,
                        cubic_coefficients, cubic_error_terms, f_operator_gap,
                        leading_forms, materialize_stability_matrix,
                        perturbation_second_order_check, reduce_operator,
                        stability_spectrum)

__all__ = [name for name in dir() if not name.startswith("_")]
