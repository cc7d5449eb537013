"""Deterministic covering methods for smooth black-box optimisation.

Objective and constraint are only seen through a first-order oracle; the
algorithms build piecewise-quadratic minorants/majorants from the queried
data and solve the resulting surrogate problems globally by branch and bound.
"""

from .algorithms import (AlgoConfig, BudgetInputs, InfeasibleStartMode, constrained_covering,
                         covering_method, delta_gap_bound, pigeonhole_budget, relax_and_project,
                         t_sufficient_constrained, t_sufficient_mu_convex,
                         t_sufficient_unconstrained)
from .approximants import ApproximantSet, Kind, Piece
from .core import (BoxDomain, FiniteDifferenceOracle, FirstOrderOracle, FunctionOracle,
                   OracleError, ProblemSpec, RunOutcome, Status, ValidationError)
from .subsolver import BnBConfig, BnBResult, BnBStatus, ProblemKind, SurrogateProblem, solve

__version__ = "0.1.0"

__all__ = [
    "AlgoConfig", "BudgetInputs", "InfeasibleStartMode", "constrained_covering",
    "covering_method", "delta_gap_bound", "pigeonhole_budget", "relax_and_project",
    "t_sufficient_constrained", "t_sufficient_mu_convex", "t_sufficient_unconstrained",
    "ApproximantSet", "Kind", "Piece", "BoxDomain", "FiniteDifferenceOracle",
    "FirstOrderOracle", "FunctionOracle", "OracleError", "ProblemSpec", "RunOutcome",
    "Status", "ValidationError", "BnBConfig", "BnBResult", "BnBStatus", "ProblemKind",
    "SurrogateProblem", "solve",
]
