"""Simulation and model predictive control of a tethered balloon carrying a pendulum payload."""

from .config import ScenarioConfig, load_config
from .dynamics import Environment, SystemParams
from .mpc import MpcController, ReferenceSchedule, controller_from_config
from .simulation import SystemState, replay_inputs, run_scenario

__all__ = [
    "Environment",
    "MpcController",
    "ReferenceSchedule",
    "ScenarioConfig",
    "SystemParams",
    "SystemState",
    "controller_from_config",
    "load_config",
    "replay_inputs",
    "run_scenario",
]
__version__ = "0.1.0"
