"""Predictor-corrector interior-point QP solvers and a GPC front end."""

from .qp import (
    InvalidArgumentError,
    InvalidStartError,
    IterPoint,
    NumericalFailure,
    QpProblem,
    SolveResult,
    SolverParams,
    Status,
    complementarity_measure,
    in_neighborhood,
    is_strictly_feasible,
    kkt_residuals,
    load_problem,
    save_problem,
)
from .mehrotra import solve_mehrotra
from .revised import solve_revised
from .oracle import solve_oracle
from .gpc import CarimaModel, GpcConfig, build_gpc_problem, load_model
from .closed_loop import ClosedLoopTrace, ReferenceSignal, export_trace, simulate

__version__ = "0.1.0"
