"""Exponential dichotomies of nonautonomous linear systems, characterized,
tested, and reconstructed through (Lp, Lq)-admissibility with respect to a
family of time-dependent norms."""

__version__ = "0.1.0"

from .admissibility import (AdmissibilityConfig, AdmissibilityReport,
                            BoundedSolver, assemble_h, check_admissibility,
                            estimate_g_norm, kernel_check, solve_bounded)
from .errors import (ConfigError, DichotomyError, ExcludedPairError,
                     GridMismatchError, InvalidExponentError,
                     InvalidInputError, InvalidPairError, OrderError,
                     SingularBundleError, WindowOverflowError)
from .evolution import EvolutionFamily, cocycle_residual, estimate_growth_bound
from .function_space import (GridFunction, lp_norm, mild_residual,
                             uniform_grid, y1_norm)
from .green import (DichotomyCertificate, GreenSolution,
                    dichotomy_solution_bounds, green_solve,
                    solution_bound_constants, unstable_pullback)
from .norm_family import (AdaptedNormFamily, NormFamily, build_lyapunov_norms,
                          family_operator_norm, norm_at, verify_envelope)
from .perturbation import (PerturbationSpec, assemble_perturbed,
                           perturbed_family, perturbed_growth_bound,
                           perturbed_propagator, phi_lq_norm,
                           robustness_experiment, smallness_condition)
from .reconstruct import (CertificationResult, ReconstructionConfig,
                          SubspacePair, certify_dichotomy,
                          doubling_time_and_rates, projection_at,
                          projection_bound, stable_membership, subspace_pair)

__all__ = [name for name in dir() if not name.startswith("_")]
