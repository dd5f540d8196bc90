"""Finite-horizon linear-quadratic dynamic games with shared constraints: equilibria,
turnpike behaviour, dissipativity, sensitivity and terminal penalties."""

from .errors import HypothesisViolated, Infeasible, NoConvergence, PerturbationInfeasible, SolverError
from .game import (DimensionMismatch, GameError, LinearPenalty, LqGame, NotConvex,
                   TerminalConstraint, Trajectory, example_game, load_game, validate)
from .solver import GnePair, SolverOptions, best_response, certify_epsilon, solve_gne
from .steady import (CentralSteadyState, SteadyStateGne, solve_central_steady_state,
                     solve_steady_state)

__version__ = "0.1.0"

__all__ = [
    "CentralSteadyState", "DimensionMismatch", "GameError", "GnePair", "HypothesisViolated",
    "Infeasible", "LinearPenalty", "LqGame", "NoConvergence", "NotConvex",
    "PerturbationInfeasible", "SolverError", "SolverOptions", "SteadyStateGne",
    "TerminalConstraint", "Trajectory", "best_response", "certify_epsilon", "example_game",
    "load_game", "solve_central_steady_state", "solve_gne", "solve_steady_state", "validate",
]
