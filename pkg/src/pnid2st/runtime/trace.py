"""Scripted simulation runs and their traces."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .interp import Runtime, Trap, format_value, scan


@dataclass(frozen=True)
class Ramp:
    """Scenario value ``start + step * k`` where k counts scans from the step's first scan."""

    start: float
    step: float

    def at(self, k: int) -> float:
        return self.start + self.step * k


@dataclass(frozen=True)
class ScenarioStep:
    start: int  # first scan (relative to the run), inclusive
    stop: int  # exclusive
    overrides: Mapping[str, Union[object, Ramp]] = field(default_factory=dict)

    def values(self, k: int) -> dict:
        return {name: (v.at(k - self.start) if isinstance(v, Ramp) else v)
                for name, v in self.overrides.items()}


@dataclass(frozen=True)
class TraceRecord:
    scan: int
    time_ms: int
    values: tuple


@dataclass
class SimulationTrace:
    watch: tuple
    types: tuple
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    trap: Optional[Trap] = None

    def column(self, name: str) -> list:
        idx = [w.upper() for w in self.watch].index(name.upper())
        return [r.values[idx] for r in self.records]

    def to_lines(self) -> str:
        out = io.StringIO()
        for r in self.records:
            pairs = " ".join(f"{n}={format_value(v, t)}" for n, t, v in zip(self.watch, self.types, r.values))
            out.write(f"scan={r.scan} time_ms={r.time_ms} {pairs}".rstrip() + "\n")
        return out.getvalue()

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["scan", "time_ms", *self.watch])
        for r in self.records:
            w.writerow([r.scan, r.time_ms, *(_csv_value(v, t) for v, t in zip(r.values, self.types))])
        return out.getvalue()


def _csv_value(value, type_name: str):
    if type_name == "BOOL":
        return int(value)
    if type_name == "REAL":
        return repr(float(value))
    return value


class SimulationAborted(RuntimeError):
    def __init__(self, trace: SimulationTrace, trap: Trap):
        super().__init__(f"simulation aborted after {len(trace.records)} scans: {trap}")
        self.trace = trace
        self.trap = trap


def _validate(scenario: Sequence[ScenarioStep]) -> None:
    prev_stop = 0
    for step in scenario:
        if step.start < prev_stop or step.stop < step.start:
            raise ValueError(f"scenario ranges must be ascending and non-overlapping: "
                             f"[{step.start}, {step.stop})")
        prev_stop = step.stop


def run(rt: Runtime, scenario: Sequence[ScenarioStep] = (), watch: Optional[Sequence[str]] = None,
        scans: Optional[int] = None) -> SimulationTrace:
    """Execute ``scans`` scans (default: up to the end of the last scenario step).

    Watched values are recorded after each scan. A trap aborts the run with
    :class:`SimulationAborted` carrying the partial trace.
    """
    _validate(scenario)
    if scans is None:
        scans = scenario[-1].stop if scenario else 0
    if watch is None:
        watch = [rt.spelling[k] for k in rt.types]
    watch = tuple(watch)
    types = tuple(rt.type_of(w) for w in watch)
    trace = SimulationTrace(watch, types, meta={
        "entry": rt.entry.name, "cycle_ms": rt.cycle_ms, "scans": scans,
        "first_scan": rt.scan_count,
        "scenario": [_step_meta(s) for s in scenario],
    })
    steps = list(scenario)
    idx = 0
    for k in range(scans):
        while idx < len(steps) and steps[idx].stop <= k:
            idx += 1
        overrides = steps[idx].values(k) if idx < len(steps) and steps[idx].start <= k else {}
        result = scan(rt, overrides)
        if result.trap is not None:
            trace.trap = result.trap
            raise SimulationAborted(trace, result.trap)
        trace.records.append(TraceRecord(result.scan, result.time_ms, tuple(rt.get(w) for w in watch)))
    return trace


def _step_meta(step: ScenarioStep) -> dict:
    return {"from": step.start, "to": step.stop,
            "set": {k: ({"ramp": [v.start, v.step]} if isinstance(v, Ramp) else v)
                    for k, v in step.overrides.items()}}


def load_scenario(data: Union[str, Mapping]) -> tuple[list[ScenarioStep], Optional[list[str]]]:
    """Parse a scenario document (JSON text or mapping).

    ``{"watch": [...], "steps": [{"from": 0, "to": 50, "set": {"Level": {"ramp": [3.0, 0.02]}}}]}``
    """
    if isinstance(data, str):
        data = json.loads(data)
    steps = []
    for raw in data.get("steps", []):
        overrides = {}
        for name, value in raw.get("set", {}).items():
            if isinstance(value, Mapping) and "ramp" in value:
                start, step = value["ramp"]
                value = Ramp(float(start), float(step))
            overrides[name] = value
        steps.append(ScenarioStep(int(raw["from"]), int(raw["to"]), overrides))
    watch = data.get("watch")
    return steps, (list(watch) if watch is not None else None)
