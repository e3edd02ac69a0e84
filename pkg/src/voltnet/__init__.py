"""voltnet: deterministic co-simulation of power distribution grids and
their SCADA communication under cyberattack."""

__version__ = "0.1.0"

from .grid import Bus, Change, GridModel, Injection, Line, Switch, Transformer
from .powerflow import PowerFlowResult, build_admittance, solve_power_flow
from .estimation import Measurement, SePolicy, estimate
from .scenario import ScenarioConfig, load_scenario, validate_config
from .runner import build_simulation, run_scenario, run_simulation

__all__ = [
    "Bus", "Change", "GridModel", "Injection", "Line", "Switch",
    "Transformer", "PowerFlowResult", "build_admittance", "solve_power_flow",
    "Measurement", "SePolicy", "estimate", "ScenarioConfig", "load_scenario",
    "validate_config", "build_simulation", "run_scenario", "run_simulation",
]
