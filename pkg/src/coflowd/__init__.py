"""Non-clairvoyant coflow scheduling: ordering, LP bound, fluid simulator."""
__version__ = "0.1.0"

from .distributions import ConfigError, SizeSpec
from .model import Instance, LoadMatrix, Realization, ValidationError, aggregate_loads
from .ordering import PriorityOrder, sincronia_order
from .lpbound import solve_lp, brute_force_lp
from .simulator import evaluate_policy, make_policy, simulate

__all__ = [
    "ConfigError", "SizeSpec", "Instance", "LoadMatrix", "Realization", "ValidationError",
    "aggregate_loads", "PriorityOrder", "sincronia_order", "solve_lp", "brute_force_lp",
    "evaluate_policy", "make_policy", "simulate",
]
