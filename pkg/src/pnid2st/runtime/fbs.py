"""Standard function blocks as pure step functions.

Each ``*_step`` takes the previous state and this scan's inputs and returns
``(outputs, new_state)``; nothing is mutated. Time is the scan clock in
milliseconds, never the wall clock.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional


@dataclass(frozen=True)
class PidState:
    """Positional PID with conditional-integration anti-windup.

    The integral accumulates ``error * dt`` (dt in seconds) only on scans
    where the unclamped output, computed with the updated integral, lies
    inside ``[low, high]``; otherwise the accumulator keeps its old value and
    the output is clamped. The derivative acts on the error and is zero on
    the first scan after construction or reset.
    """

    kp: float = 1.0
    ki: float = 0.0
    kd: float = 0.0
    low: float = 0.0
    high: float = 100.0
    integral: float = 0.0
    prev_error: float = 0.0
    first: bool = True

    def reset(self) -> "PidState":
        return replace(self, integral=0.0, prev_error=0.0, first=True)


def pid_step(state: PidState, setpoint: float, pv: float, dt_ms: int) -> tuple[float, PidState]:
    if dt_ms <= 0:
        raise ValueError(f"dt_ms must be positive, got {dt_ms}")
    if not state.low < state.high:
        raise ValueError(f"output limits must satisfy low < high, got [{state.low}, {state.high}]")
    dt = dt_ms / 1000.0
    e = setpoint - pv
    p = state.kp * e
    d = 0.0 if state.first else state.kd * (e - state.prev_error) / dt
    trial = state.integral + e * dt
    u = p + state.ki * trial + d
    if state.low <= u <= state.high:
        integral, out = trial, u
    else:
        integral = state.integral
        out = min(max(p + state.ki * integral + d, state.low), state.high)
    return out, replace(state, integral=integral, prev_error=e, first=False)


class TimerOutputs(NamedTuple):
    q: bool
    et: int


@dataclass(frozen=True)
class TimerState:
    pt: int = 0
    et: int = 0
    q: bool = False
    start_ms: Optional[int] = None  # scan time at which the running interval began
    prev_in: bool = False


def ton_step(state: TimerState, in_: bool, now_ms: int, pt: Optional[int] = None):
    """On-delay: Q rises once IN has been TRUE for PT; ET stops at PT; IN FALSE resets."""
    pt = max(0, state.pt if pt is None else pt)
    if in_:
        start = now_ms if state.start_ms is None else state.start_ms
        et = min(now_ms - start, pt)
        q = et >= pt
    else:
        start, et, q = None, 0, False
    return TimerOutputs(q, et), TimerState(pt, et, q, start, in_)


def tof_step(state: TimerState, in_: bool, now_ms: int, pt: Optional[int] = None):
    """Off-delay: Q follows IN high immediately and falls PT after IN falls."""
    pt = max(0, state.pt if pt is None else pt)
    if in_:
        start, et, q = None, 0, True
    else:
        start = now_ms if state.prev_in else state.start_ms
        if start is None:
            et, q = 0, False  # never switched on
        else:
            et = min(now_ms - start, pt)
            q = et < pt
    return TimerOutputs(q, et), TimerState(pt, et, q, start, in_)


@dataclass(frozen=True)
class TrigState:
    prev: bool = False


def rtrig_step(state: TrigState, clk: bool, now_ms: int = 0) -> tuple[bool, TrigState]:
    """Q is TRUE for exactly the scan in which CLK goes FALSE -> TRUE."""
    return (clk and not state.prev), TrigState(clk)


def ftrig_step(state: TrigState, clk: bool, now_ms: int = 0) -> tuple[bool, TrigState]:
    # previous CLK starts FALSE, so a FALSE input on the first scan is not an edge
    return (state.prev and not clk), TrigState(clk)
