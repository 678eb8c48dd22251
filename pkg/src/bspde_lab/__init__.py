"""Tree-based numerical laboratory for backward SPDEs with jumps on a 1-D domain."""

from .comparison import ComparisonReport, run_comparison, verify_hypotheses
from .errors import (
    BSPDEError,
    ConfigurationError,
    DriverError,
    ExpressionError,
    NumericError,
    PreconditionError,
)
from .field import Grid, apply_A, constant, gradient, l2_inner, make_grid, positive_part_defect
from .levy import LambdaWeight, LevyModel, check_lambda_bound, jump_integral
from .problem import (
    ConcaveDriver,
    DriverInput,
    ExpressionDriver,
    LinearDriver,
    ProblemSpec,
    Terminal,
    check_A1,
    check_A3,
    estimate_lipschitz,
    eval_driver,
)
from .risk import convexity_suite, monotonicity_suite, rho, translation_suite
from .solver import SchemeParams, SolutionBundle, residual_check, solve_deterministic, solve_stochastic
from .tree import NoiseTree, build_tree, cond_expect, extract_r, extract_Z

__version__ = "0.1.0"
