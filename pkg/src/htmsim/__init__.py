"""Cycle-level simulator of a limited read/write-set HTM on directory MESI."""

from .config import FpMechanism, SimConfig, load_config
from .harness import RunSpec, StatsRecord, emit_csv, format_csv, run_experiment, sweep
from .kernel import CycleLimitExceeded, Kernel
from .system import System

__all__ = ["CycleLimitExceeded", "FpMechanism", "Kernel", "RunSpec", "SimConfig", "StatsRecord",
           "System", "emit_csv", "format_csv", "load_config", "run_experiment", "sweep"]
__version__ = "0.1.0"
