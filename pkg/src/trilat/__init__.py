"""Least-squares spatial intersection (trilateration) from squared distances."""

from trilat.model import (
    Mode,
    ObservationSet,
    PointEstimate,
    ProblemSpec,
    Station,
    StationarityResidual,
    classify_stationary,
    eval_zeta,
    gradient,
    hessian_G,
    jacobian_zeta,
    objective,
    second_derivatives,
    stationarity_residual,
)
from trilat.errors import (
    ConvergenceError,
    DegenerateGeometryError,
    DegenerateReductionError,
    IdenticallySatisfiedError,
    IllConditionedError,
    NoCandidatesError,
    ParseError,
    ProblemError,
    TrilatError,
)
from trilat.fileio import parse_problem, parse_problem_file, serialize_problem
from trilat.model import Classification
from trilat.numeric import SolverConfig, gauss_newton, grid_then_polish, multistart_solve
from trilat.solution import CandidateSolution
from trilat.solver import SolveOutcome, solve

__version__ = "0.1.0"

__all__ = [
    "CandidateSolution",
    "Classification",
    "ConvergenceError",
    "DegenerateGeometryError",
    "DegenerateReductionError",
    "IdenticallySatisfiedError",
    "IllConditionedError",
    "NoCandidatesError",
    "ParseError",
    "ProblemError",
    "SolveOutcome",
    "SolverConfig",
    "TrilatError",
    "gauss_newton",
    "grid_then_polish",
    "multistart_solve",
    "parse_problem",
    "parse_problem_file",
    "serialize_problem",
    "solve",
    "Mode",
    "ObservationSet",
    "PointEstimate",
    "ProblemSpec",
    "Station",
    "StationarityResidual",
    "classify_stationary",
    "eval_zeta",
    "gradient",
    "hessian_G",
    "jacobian_zeta",
    "objective",
    "second_derivatives",
    "stationarity_residual",
    "__version__",
]
