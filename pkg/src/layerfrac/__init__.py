"""Phase-field fracture of layered elastic-plastic media under a surfing load."""

from .config import SimulationConfig, desk_config, load_config, parse_config
from .simulation import RunResult, run_quasistatic

__all__ = ["SimulationConfig", "desk_config", "load_config", "parse_config", "RunResult", "run_quasistatic"]
__version__ = "0.1.0"
