"""Shallow-lake optimal control: dynamics, bracketed objective, localization and search."""

from .control import ControlSignal
from .dynamics import ModelParams, integrate_state, make_lake_dynamics, make_linear_dynamics
from .localization import improve, maximizing_bounds
from .objective import evaluate_objective, value_upper_bound
from .search import SearchConfig, ascend, maximizing_sequence

__version__ = "0.1.0"

__all__ = [
    "ControlSignal", "ModelParams", "SearchConfig", "ascend", "evaluate_objective", "improve",
    "integrate_state", "make_lake_dynamics", "make_linear_dynamics", "maximizing_bounds",
    "maximizing_sequence", "value_upper_bound",
]
