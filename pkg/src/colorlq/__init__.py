"""Finite-horizon LQ control for discrete-time systems with colored
multiplicative noise, with an exact enumeration oracle."""

__version__ = "0.1.0"

from .errors import ColorLQError, NotSolvable
from .model import (
    InitialCondition,
    NoiseSpec,
    Problem,
    SystemModel,
    load_config,
    load_problem,
    make_noise,
    rademacher,
    validate,
)
from .riccati_delay import solve_delayed
from .riccati_free import optimal_value, solve_literal, solve_measurable, solve_white
from .schedule import Schedule

__all__ = [
    "ColorLQError", "NotSolvable", "InitialCondition", "NoiseSpec", "Problem",
    "SystemModel", "Schedule", "load_config", "load_problem", "make_noise", "rademacher",
    "validate", "solve_delayed", "solve_literal", "solve_measurable", "solve_white",
    "optimal_value",
]
