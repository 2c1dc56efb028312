"""Discrete-event simulator of 802.11ah RAW access: the standard scheme and DEARF."""

from .config import Config, ConfigError, load_config
from .engine import SimulationError, Simulator
from .metrics import RunSummary
from .simulation import run_simulation, scenario
from .traffic import ScenarioSpec

__all__ = ["Config", "ConfigError", "load_config", "SimulationError", "Simulator", "RunSummary",
           "run_simulation", "scenario", "ScenarioSpec"]
__version__ = "0.1.0"
