"""kfnoc: cycle-level simulator of a CPU/GPU chiplet mesh interconnect
with Kalman-filter-driven virtual-channel and switch reconfiguration."""

from .config import ScenarioConfig, load_config
from .simcore import RunResult, compare, run, sweep_vc, write_run_outputs

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "load_config", "RunResult", "run", "compare",
           "sweep_vc", "write_run_outputs", "__version__"]
