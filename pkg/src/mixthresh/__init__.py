"""Iterative thresholding for linear inverse problems with mixed power penalties."""

from .model import PenaltySpec, Problem, objective, penalty_value, surrogate
from .operators import (
    LinearOp,
    conv1d_op,
    diag_op,
    haar_analysis,
    haar_synthesis,
    identity_op,
    matrix_op,
    multiframe_op,
    renormalize,
    sum_space_op,
)
from .regpath import make_schedule, minimal_element, run_regpath
from .shrinkage import PenaltyTerm, eval_F, residual_bound, shrink_multi, shrink_scalar
from .solver import StopRule, SolveTrace, fixed_point_residual, solve, solve_decomposition, step

__version__ = "0.1.0"
