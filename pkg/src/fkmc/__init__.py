"""Backward-in-time Feynman-Kac Monte-Carlo solver for linear parabolic PDEs."""

from .backward import (EndpointSet, PointEstimate, evaluate_with_endpoints, solve_grid,
                       solve_point, trace_endpoints, trace_grid)
from .errors import (CacheError, ExpressionError, FkmcError, SolverError, SpecError,
                     StabilityError, TrajectoryFault, ValidationError)
from .forward import BinnedSolution, solve_forward
from .problem import ProblemSpec, validate
from .reference import fd_solve, gaussian_oracle, gaussian_oracle_mv

__version__ = "0.1.0"

__all__ = [
    "BinnedSolution",
    "CacheError",
    "EndpointSet",
    "ExpressionError",
    "FkmcError",
    "PointEstimate",
    "ProblemSpec",
    "SolverError",
    "SpecError",
    "StabilityError",
    "TrajectoryFault",
    "ValidationError",
    "evaluate_with_endpoints",
    "fd_solve",
    "gaussian_oracle",
    "gaussian_oracle_mv",
    "solve_forward",
    "solve_grid",
    "solve_point",
    "trace_endpoints",
    "trace_grid",
    "validate",
]
