"""Energy-efficient federated learning over a multi-group massive-MIMO cell.

Modules: ``model`` (scenario and large-scale fading), ``comms`` (ZF rates,
delays, energies, feasibility), ``surrogate`` (convex inner bounds),
``convex_solver`` (log-barrier interior point), ``optimizer`` (SCA for the
async and sync schemes), ``baselines`` (fixed-rule heuristics) and
``harness`` (Monte Carlo runs, grid oracle, CLI).
"""

from .baselines import heuristic_async, heuristic_sync
from .comms import Allocation, check, delays, energies
from .model import ChannelInstance, ConfigError, SystemConfig, generate_network
from .optimizer import ScaOptions, ScaResult, initial_point, sca_solve

__all__ = [
    "Allocation", "ChannelInstance", "ConfigError", "ScaOptions", "ScaResult", "SystemConfig",
    "check", "delays", "energies", "generate_network", "heuristic_async", "heuristic_sync",
    "initial_point", "sca_solve",
]
__version__ = "0.1.0"
