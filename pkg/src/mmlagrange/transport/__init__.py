"""Exact optimal transport on finite spaces."""

from .solvers import (Coupling, GoodInftyResult, TransportResult, good_infty_plan,
                      lift_to_dynamical, optimal_coupling_q, winf, winf_limit_check)
from .simplex import SimplexError, transport_simplex

__all__ = [
    "Coupling", "GoodInftyResult", "TransportResult", "SimplexError", "good_infty_plan",
    "lift_to_dynamical", "optimal_coupling_q", "transport_simplex", "winf", "winf_limit_check",
]
