"""Generation tasks and their prompt templates."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

KINDS = ("element_detection", "control_loop", "interlock", "sequence")

# refinement flag -> clause appended to sequence prompts
REFINEMENTS = {
    "valve_ranges": "State the admissible analog opening range of every inlet valve.",
    "flow_rates": "Give the concrete flow rate each phase should reach.",
    "gradual_timing": "Give timings for gradually increasing fan speed and flow rate, phase by phase.",
}

_REQUIRED = {
    "element_detection": (),
    "control_loop": (),
    "interlock": ("equipment",),
    "sequence": ("procedure",),
}

_STYLE = (
    "Declare every signal the code reads from the plant as an input variable "
    "and every signal it drives as an output variable. "
    "For comments in the source code only use the (* … *) notation, never //. "
    "Return the complete code in a single ```iecst fenced block."
)


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class GenerationTask:
    kind: str
    targets: tuple[str, ...] = ()
    context: Mapping[str, object] = field(default_factory=dict)
    tiles: tuple[str, ...] = ()
    group: str = "default"
    task_id: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TaskError(f"unknown task kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind == "element_detection" and self.targets:
            raise TaskError("element_detection tasks carry no target tags")
        if self.kind != "element_detection" and not self.targets:
            raise TaskError(f"{self.kind} task needs at least one target tag")
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "tiles", tuple(self.tiles))

    def to_dict(self) -> dict:
        return {"id": self.task_id, "kind": self.kind, "targets": list(self.targets),
                "context": dict(self.context), "tiles": list(self.tiles), "group": self.group}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GenerationTask":
        return cls(d["kind"], tuple(d.get("targets", ())), dict(d.get("context", {})),
                   tuple(d.get("tiles", ())), d.get("group", "default"), d.get("id", ""))


def _tags(targets) -> str:
    if len(targets) == 1:
        return targets[0]
    return ", ".join(targets[:-1]) + " and " + targets[-1]


def _extras(context: Mapping, used: set) -> str:
    rest = {k: v for k, v in context.items() if k not in used}
    if not rest:
        return ""
    lines = [f"- {k}: {v if isinstance(v, str) else json.dumps(v, sort_keys=True)}"
             for k, v in sorted(rest.items())]
    return "\nAdditional specifications:\n" + "\n".join(lines)


def _detection(task: GenerationTask) -> str:
    scope = task.context.get("scope", "controllers")
    return (
        f"List all {scope} shown in the attached P&ID image. "
        "Controllers are the instrument bubbles whose tagname contains the letter C. "
        "Answer with one line per element in the form\n"
        "- TAG | kind | quantity\n"
        "where kind is one of controller, indicator, transmitter, valve, vessel, pump, switch "
        "and quantity is one of flow, level, pressure, temperature, other. "
        "Do not add any other text."
        + _extras(task.context, {"scope"})
    )


def _control_loop(task: GenerationTask) -> str:
    structure = task.context.get("structure", "control loop")
    block = task.context.get("pid_block", "PID")
    return (
        f"Generate a self-contained IEC 61131-3 ST function block implementing the {structure} "
        f"of {_tags(task.targets)}. "
        f"Treat every controller as an instance of the standard {block} function block "
        "(inputs SP, PV, KP, KI, KD, OUT_LOW, OUT_HIGH; output OUT) and choose plausible parameters. "
        "Use the tagnames of the measuring sensors as variable names and declare them as input "
        "variables; use the tagnames of the driven controllers or valves for the outputs. " + _STYLE
        + _extras(task.context, {"structure", "pid_block"})
    )


def _interlock(task: GenerationTask) -> str:
    return (
        f"For the {task.context['equipment']} {_tags(task.targets)} in the attached P&ID, "
        f"provide the interlocks required for {_tags(task.targets)}, then write them as a "
        "self-contained IEC 61131-3 ST function block. Alarm limits and trip actions must be "
        "declared as named constants. " + _STYLE
        + _extras(task.context, {"equipment"})
    )


def _sequence(task: GenerationTask) -> str:
    flags = task.context.get("refinements", ())
    unknown = [f for f in flags if f not in REFINEMENTS]
    if unknown:
        raise TaskError(f"unknown refinement flags: {', '.join(unknown)}")
    text = (
        f"Write IEC 61131-3 ST code for the {task.context['procedure']} involving "
        f"{_tags(task.targets)} as a PROGRAM. Implement a valid state machine: exactly one "
        "phase may be active at any time and every phase transition must be guarded by a timer "
        "or a process condition. Use TON function blocks for all timings."
    )
    if flags:
        text += " " + " ".join(REFINEMENTS[f] for f in flags)
        text += " Use the concrete values below; do not invent placeholders."
    return text + " " + _STYLE + _extras(task.context, {"procedure", "refinements"})


_TEMPLATES = {
    "element_detection": _detection,
    "control_loop": _control_loop,
    "interlock": _interlock,
    "sequence": _sequence,
}


def render_prompt(task: GenerationTask) -> str:
    missing = [k for k in _REQUIRED[task.kind] if k not in task.context]
    if missing:
        raise TaskError(f"{task.kind} task is missing context key(s): {', '.join(missing)}")
    return _TEMPLATES[task.kind](task)


def nudge_prompt() -> str:
    return ("Your previous answer contained no IEC 61131-3 ST code. Reply with the complete code "
            "in a single ```iecst fenced block.")


def repair_prompt(code: str, diagnostics_text: str) -> str:
    return (
        "The checker reported errors in the ST code below. Fix every reported problem and return "
        "the complete corrected code in a single ```iecst fenced block.\n\n"
        f"Diagnostics:\n{diagnostics_text.rstrip()}\n\n```iecst\n{code.rstrip()}\n```"
    )
