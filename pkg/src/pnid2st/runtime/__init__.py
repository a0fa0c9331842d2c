"""Scan-cycle execution of checked ST units."""

from .fbs import (
    PidState, TimerOutputs, TimerState, TrigState, ftrig_step, pid_step, rtrig_step, tof_step, ton_step,
)
from .interp import (
    DEFAULT_CYCLE_MS, FrozenRuntimeError, OverrideError, Runtime, ScanResult, Trap, UnknownPouError,
    format_value, instantiate, scan,
)
from .trace import (
    Ramp, ScenarioStep, SimulationAborted, SimulationTrace, TraceRecord, load_scenario, run,
)

__all__ = [
    "PidState", "TimerOutputs", "TimerState", "TrigState", "ftrig_step", "pid_step", "rtrig_step",
    "tof_step", "ton_step", "DEFAULT_CYCLE_MS", "FrozenRuntimeError", "OverrideError", "Runtime",
    "ScanResult", "Trap", "UnknownPouError", "format_value", "instantiate", "scan", "Ramp",
    "ScenarioStep", "SimulationAborted", "SimulationTrace", "TraceRecord", "load_scenario", "run",
]
