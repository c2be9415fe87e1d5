"""Crest-factor energies and eigenvalue Dirichlet problems for supremal functionals on grids."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .boundary import Affine, PiecewiseAffine, Quadratic
from .construct import (SolutionReport, SolveRequest, conformal_solution, mcshane_solution,
                        refine_inclusion, sawtooth_1d, solve)
from .eigen import (EigenProblem, alpha_inverse, alpha_inverse_array, default_sample_cloud,
                    lambda_star_conformal, lambda_star_jet, resolve_lambda, validate_subsolution)
from .energy import crest_factor, energy_inf, energy_p, p_sweep
from .errors import (CrestfieldError, DegenerateEnergy, GridMismatch, Infeasible, NoBracket,
                     NonFiniteSupremand, NotMonotone, ParseError, SchemaError, StalledProgress,
                     StencilError)
from .grid import Field, Grid, Jet, JetField, SymMat, eigenvalues_sym, finite_difference_jet, gram
from .supremand import (SampleCloud, SupremandSpec, eval_H, eval_h, from_catalog, from_expression,
                        validate_hypotheses)
from .verify import (ExclusionPolicy, check_pde_residual, classify_theorem1, deviation_measure,
                     jensen_lower_bound_check)

__all__ = [name for name in dir() if not name.startswith("_")]
