"""Sharp lower bounds for weighted L^p norms under prescribed one-dimensional marginals.

The minimizer of ``int |h|^p w`` over functions with given weighted marginals
is ``sign(Phi_bar)|Phi_bar|^(1/(p-1))``, where ``Phi_bar`` averages one-variable
multipliers solving a system of nonlinear integral equations.  This package
discretizes that system on tensor grids, solves it, and checks the result
against a direct minimization and against the known counterexamples.
"""

__version__ = "0.1.0"

from .errors import (AlignmentError, ConfigurationError, DomainError, InputError, MarginBoundError,
                     PositivityError, ShapeError)
from .grid import (Axis, GridSpec, MarginalSet, ScalarField, build_axis, build_grid, comarginal_density,
                   integrate, marginal_density, marginalize, weighted_marginals, weighted_p_norm)
from .densities import (DiagonalCounterexampleSpec, ProductMixtureSpec, SmirnovClass, assemble_diagonal,
                        assemble_product_mixture, check_weight_conditions, classify_smirnov,
                        correlated_gaussian, likelihood_ratio, power_law_theta, ratio_growth,
                        tabulated_density, uniform_density)
from .solver import (MultiplierSet, SolveOptions, SolveReport, lower_bound, normalize_multipliers,
                     reconstruct_minimizer, residual, residual_jacobian, solve_newton, solve_p2)
from .oracle import FeasibleSet, min_norm_direct, mixed_difference_sup, null_space_element, random_feasible
from .counterexamples import (build_witness, certify_divergence, nonuniqueness_witness,
                              smirnov_violation_report)

__all__ = ["__version__", "AlignmentError", "ConfigurationError", "DomainError", "InputError",
           "MarginBoundError", "PositivityError", "ShapeError", "Axis", "GridSpec", "MarginalSet",
           "ScalarField", "build_axis", "build_grid", "comarginal_density", "integrate", "marginal_density",
           "marginalize", "weighted_marginals", "weighted_p_norm", "DiagonalCounterexampleSpec",
           "ProductMixtureSpec", "SmirnovClass", "assemble_diagonal", "assemble_product_mixture",
           "check_weight_conditions", "classify_smirnov", "correlated_gaussian", "likelihood_ratio",
           "power_law_theta", "ratio_growth", "tabulated_density", "uniform_density", "MultiplierSet",
           "SolveOptions", "SolveReport", "lower_bound", "normalize_multipliers", "reconstruct_minimizer",
           "residual", "residual_jacobian", "solve_newton", "solve_p2", "FeasibleSet", "min_norm_direct",
           "mixed_difference_sup", "null_space_element", "random_feasible", "build_witness",
           "certify_divergence", "nonuniqueness_witness", "smirnov_violation_report"]
