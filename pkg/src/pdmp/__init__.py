"""Distribution functions of piecewise-deterministic Markov processes.

Upwind finite differences for the Liouville-Master equation, with a direct
Monte Carlo simulator of the same process to check against.
"""
from .expr import DriftEvalError, ParseError, parse, serialize
from .model import (ConfigurationError, ModelSpec, equilibrium_domain, eval_drift,
                    generator_matrix, parse_drift, validate_model)
from .solver import (CFLViolation, FieldState, Grid, InitialCondition, MarginalState,
                     NumericalError, build_grid, cfl_max_dt, density, diffusion_coefficient,
                     init_cauchy, marginal_step, solve, total_cdf, upwind_step)
from .montecarlo import (PathConfig, SampleEnsemble, ecdf, histogram, integrate_drift,
                         run_ensemble, simulate_path)
from .analysis import (CheckReport, check_bounded, check_conservation, check_monotone,
                       convergence_order, error_growth, ks_distance, stochastic_norm_check)
from .config import RunConfig, load_config

__version__ = "0.1.0"
