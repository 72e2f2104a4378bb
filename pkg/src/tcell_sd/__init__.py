"""Stock-and-flow simulation of naive T-cell maintenance under thymic involution."""

from .analysis import (FitSpec, MetricValue, SweepSpec, fit, run_scenario, sensitivity,
                       sweep)
from .engine import IntegrationConfig, StateVector, Trajectory, integrate
from .model import (ParameterSet, ScenarioSpec, TCellState, builtin_scenarios, derivatives,
                    get_preset)

__all__ = [
    "FitSpec", "IntegrationConfig", "MetricValue", "ParameterSet", "ScenarioSpec",
    "StateVector", "SweepSpec", "TCellState", "Trajectory", "builtin_scenarios",
    "derivatives", "fit", "get_preset", "integrate", "run_scenario", "sensitivity", "sweep",
]
