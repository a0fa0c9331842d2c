"""Staged generation: element detection, code generation, diagnostic repair, batch runs."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from ..diagnostics import Diagnostic, has_errors, render_text
from ..projectio import Artifact, write_st_files
from ..sema import check_source
from ..st import ast
from .client import ChatClient, ClientError, Message, MockMismatch
from .elements import ElementList, parse_element_lines
from .extract import first_st_snippet
from .prompts import GenerationTask, TaskError, nudge_prompt, render_prompt, repair_prompt
from .transcript import Clock, Transcript, utc_clock

SYSTEM_PROMPT = ("You are an experienced control engineer. You read P&ID images and write "
                 "IEC 61131-3 Structured Text for industrial controllers.")
DEFAULT_MAX_ROUNDS = 3
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_WORKERS = 2


class PipelineError(RuntimeError):
    def __init__(self, message: str, transcript: Optional[Transcript] = None):
        super().__init__(message)
        self.transcript = transcript


class GenerationError(PipelineError):
    pass


class RepairFailed(PipelineError):
    def __init__(self, message: str, candidate: "Candidate", rounds: int, transcript: Optional[Transcript] = None):
        super().__init__(message, transcript)
        self.candidate = candidate
        self.rounds = rounds


class PlanError(ValueError):
    pass


@dataclass
class Conversation:
    """Message history for one P&ID; resent in full with every request."""

    id: str
    messages: list[Message] = field(default_factory=lambda: [Message("system", SYSTEM_PROMPT)])


@dataclass(frozen=True)
class Candidate:
    text: str
    unit: Optional[ast.SourceUnit]
    diagnostics: tuple[Diagnostic, ...]

    @classmethod
    def from_text(cls, text: str) -> "Candidate":
        unit, diags = check_source(text)
        return cls(text, unit, tuple(diags))

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]

    @property
    def lints(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if not d.is_error]

    @property
    def error_codes(self) -> set[str]:
        return {d.code for d in self.errors}

    @property
    def ok(self) -> bool:
        return self.unit is not None and not has_errors(self.diagnostics)

    @property
    def lines(self) -> int:
        return len(self.text.strip("\n").splitlines())

    def gates(self) -> dict:
        parsed = self.unit is not None
        return {"parse": parsed, "check": parsed and not has_errors(self.diagnostics),
                "lint": len(self.lints)}


def _send(client: ChatClient, conv: Conversation, prompt: str, transcript: Transcript, purpose: str,
          images: Sequence[str] = (), max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> str:
    request = conv.messages + [Message("user", prompt, tuple(images))]
    for attempt in range(1, max_attempts + 1):
        try:
            response = client.send(request, conversation=conv.id)
            break
        except ClientError as exc:
            transcript.warn(f"{purpose}: attempt {attempt}/{max_attempts} failed: {exc}")
    else:
        raise PipelineError(f"client failed after {max_attempts} attempts", transcript)
    conv.messages.extend([request[-1], Message("assistant", response)])
    transcript.exchange(purpose, prompt, response, images)
    return response


def _new_transcript(task: GenerationTask, conv: Conversation, client, clock: Clock) -> Transcript:
    describe = getattr(client, "describe", None)
    return Transcript(task.task_id or task.kind, task.to_dict(), conv.id, describe() if describe else {}, clock=clock)


def detect_elements(client: ChatClient, tiles: Sequence[str], kind_filter: Optional[Iterable[str]] = None, *,
                    task: Optional[GenerationTask] = None, conversation: Optional[Conversation] = None,
                    transcript: Optional[Transcript] = None, max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                    clock: Clock = utc_clock) -> tuple[ElementList, Transcript]:
    if not tiles:
        raise ValueError("element detection needs at least one tile")
    task = task or GenerationTask("element_detection", tiles=tuple(tiles))
    conv = conversation or Conversation(task.group)
    transcript = transcript or _new_transcript(task, conv, client, clock)
    response = _send(client, conv, render_prompt(task), transcript, "detect", tiles, max_attempts)
    elements = parse_element_lines(response)
    if kind_filter is not None:
        kinds = tuple(kind_filter)
        elements = elements.of_kind(*kinds)
    for w in elements.warnings:
        transcript.warn(w)
    return elements, transcript


def generate(client: ChatClient, task: GenerationTask, *, conversation: Optional[Conversation] = None,
             transcript: Optional[Transcript] = None, max_attempts: int = DEFAULT_MAX_ATTEMPTS,
             clock: Clock = utc_clock) -> tuple[Candidate, Transcript]:
    if task.kind == "element_detection":
        raise TaskError("generate() does not handle element_detection tasks")
    conv = conversation or Conversation(task.group)
    transcript = transcript or _new_transcript(task, conv, client, clock)
    prompt = render_prompt(task)
    snippet = first_st_snippet(_send(client, conv, prompt, transcript, "generate", task.tiles, max_attempts))
    attempts = 1
    while snippet is None:
        transcript.warn("no code in response")
        if attempts >= max_attempts:
            transcript.finish("failed", "no code in response")
            raise GenerationError("no code in response", transcript)
        snippet = first_st_snippet(_send(client, conv, nudge_prompt(), transcript, "retry", (), max_attempts))
        attempts += 1
    return Candidate.from_text(snippet), transcript


def _records(diags: Iterable[Diagnostic]) -> list[dict]:
    return [d.to_record() for d in diags]


def repair(client: ChatClient, candidate: Candidate, diagnostics: Optional[Sequence[Diagnostic]] = None, *,
           max_rounds: int = DEFAULT_MAX_ROUNDS, conversation: Optional[Conversation] = None,
           transcript: Optional[Transcript] = None, max_attempts: int = DEFAULT_MAX_ATTEMPTS,
           clock: Clock = utc_clock) -> tuple[Candidate, int]:
    """Feed checker diagnostics back until the candidate is clean.

    A round whose answer has more distinct error codes than the best
    candidate so far is rejected; it still counts against ``max_rounds``.
    """
    if candidate.ok:
        return candidate, 0
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    conv = conversation or Conversation("repair")
    if transcript is None:
        transcript = Transcript("repair", {"kind": "repair"}, conv.id, clock=clock)
    best = candidate
    sent = list(diagnostics) if diagnostics else best.errors
    for round_no in range(1, max_rounds + 1):
        response = _send(client, conv, repair_prompt(best.text, render_text(sent)), transcript, "repair",
                         (), max_attempts)
        snippet = first_st_snippet(response)
        if snippet is None:
            transcript.repair(round_no, _records(sent), [], "rejected: no code in response")
            continue
        new = Candidate.from_text(snippet)
        if new.ok:
            transcript.repair(round_no, _records(sent), _records(new.diagnostics), "clean")
            return new, round_no
        if len(new.error_codes) > len(best.error_codes):
            transcript.repair(round_no, _records(sent), _records(new.diagnostics),
                              f"rejected: distinct error codes grew from {len(best.error_codes)} "
                              f"to {len(new.error_codes)}")
            continue
        transcript.repair(round_no, _records(sent), _records(new.diagnostics), "kept: errors remain")
        best = new
        sent = best.errors
    reason = f"errors remain after {max_rounds} repair rounds: {', '.join(sorted(best.error_codes))}"
    transcript.finish("failed", reason)
    raise RepairFailed(reason, best, max_rounds, transcript)


# -- batch --------------------------------------------------------------------

@dataclass
class Plan:
    name: str
    tasks: list[GenerationTask]

    @classmethod
    def from_dict(cls, data: Mapping) -> "Plan":
        tasks = [GenerationTask.from_dict(t) for t in data.get("tasks", [])]
        return cls(data.get("name", "plan"), tasks)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Plan":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PlanError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {"name": self.name, "tasks": [t.to_dict() for t in self.tasks]}


@dataclass
class TaskReport:
    task_id: str
    kind: str
    group: str
    targets: list[str]
    status: str = "failed"
    reason: str = ""
    rounds: int = 0
    exchanges: int = 0
    lines: int = 0
    pous: list[str] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    gates: dict = field(default_factory=dict)
    diagnostics: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    elements: Optional[dict] = None
    needs_review: bool = False

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        if out["elements"] is None:
            del out["elements"]
        return out


@dataclass
class GenerationReport:
    plan: str
    tasks: list[TaskReport]

    @property
    def ok(self) -> bool:
        return all(t.status == "accepted" for t in self.tasks)

    def accepted(self) -> list[TaskReport]:
        return [t for t in self.tasks if t.status == "accepted"]

    def to_dict(self) -> dict:
        return {"plan": self.plan, "ok": self.ok,
                "summary": {"tasks": len(self.tasks), "accepted": len(self.accepted()),
                            "failed": len(self.tasks) - len(self.accepted())},
                "tasks": [t.to_dict() for t in self.tasks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        lines = [f"plan {self.plan}: {len(self.accepted())}/{len(self.tasks)} tasks accepted"]
        for t in self.tasks:
            head = f"  [{t.status}] {t.task_id} ({t.kind}"
            head += f": {', '.join(t.targets)})" if t.targets else ")"
            if t.kind == "element_detection" and t.elements is not None:
                head += f" elements={len(t.elements['elements'])}"
            else:
                head += f" rounds={t.rounds} lines={t.lines}"
            if t.needs_review:
                head += " review"
            lines.append(head)
            if t.reason:
                lines.append(f"      reason: {t.reason}")
            lines.extend(f"      {f}" for f in t.files)
            lines.extend(f"      {d['code']} {d['line']}:{d['column']} {d['message']}" for d in t.diagnostics)
            lines.extend(f"      warning: {w}" for w in t.warnings)
        return "\n".join(lines) + "\n"


@dataclass
class _Outcome:
    report: TaskReport
    transcript: Transcript
    candidate: Optional[Candidate] = None
    elements: Optional[ElementList] = None


def _run_task(client, task: GenerationTask, conv: Conversation, tiles: Sequence[str], max_rounds: int,
              max_attempts: int, clock: Clock, kind_filter) -> _Outcome:
    report = TaskReport(task.task_id, task.kind, task.group, list(task.targets))
    transcript = _new_transcript(task, conv, client, clock)
    out = _Outcome(report, transcript)
    task_tiles = task.tiles or tuple(tiles)
    try:
        if task.kind == "element_detection":
            elements, _ = detect_elements(client, task_tiles, kind_filter, task=task, conversation=conv,
                                          transcript=transcript, max_attempts=max_attempts, clock=clock)
            out.elements = elements
            report.elements = elements.to_dict()
            report.status = "accepted"
            transcript.finish("accepted")
        else:
            candidate, _ = generate(client, task, conversation=conv, transcript=transcript,
                                    max_attempts=max_attempts, clock=clock)
            candidate, rounds = repair(client, candidate, max_rounds=max_rounds, conversation=conv,
                                       transcript=transcript, max_attempts=max_attempts, clock=clock)
            report.rounds = rounds
            out.candidate = candidate
            report.status = "accepted"
            transcript.finish("accepted")
    except RepairFailed as exc:
        report.rounds = exc.rounds
        report.reason = str(exc)
        out.candidate = exc.candidate
    except (PipelineError, TaskError, MockMismatch, ValueError) as exc:
        report.reason = str(exc)
        if transcript.status is None:
            transcript.finish("failed", str(exc))
    cand = out.candidate
    if cand is not None:
        report.lines = cand.lines
        report.gates = cand.gates()
        report.diagnostics = _records(cand.diagnostics)
        report.pous = [p.name for p in cand.unit.pous] if cand.unit else []
        report.needs_review = report.status == "accepted" and (report.rounds > 0 or bool(cand.lints))
    report.exchanges = len(transcript.exchanges())
    report.warnings = transcript.warnings()
    return out


def _run_group(client, tasks: list[GenerationTask], tiles, max_rounds, max_attempts, clock, kind_filter):
    conv = Conversation(tasks[0].group)
    ordered = [t for t in tasks if t.kind == "element_detection"] + \
              [t for t in tasks if t.kind != "element_detection"]
    return [_run_task(client, t, conv, tiles, max_rounds, max_attempts, clock, kind_filter) for t in ordered]


def _with_ids(tasks: Sequence[GenerationTask]) -> list[GenerationTask]:
    out = []
    for i, t in enumerate(tasks, 1):
        if not t.task_id:
            t = GenerationTask(t.kind, t.targets, t.context, t.tiles, t.group, f"{i:02d}_{t.kind}")
        out.append(t)
    ids = [t.task_id for t in out]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise PlanError(f"duplicate task ids: {', '.join(dupes)}")
    return out


def draft_plan(name: str, elements: ElementList, group: str) -> Plan:
    """One control_loop task per detected controller, for review before the next run."""
    tasks = [GenerationTask("control_loop", (e.tag,), {"structure": f"{e.quantity} control loop"},
                            group=group) for e in elements if e.kind == "controller"]
    return Plan(f"{name}-draft", _with_ids(tasks))


def run_batch(plan: Plan, client: ChatClient, out_dir: Union[str, Path], *, tiles: Sequence[str] = (),
              workers: int = DEFAULT_WORKERS, max_rounds: int = DEFAULT_MAX_ROUNDS,
              max_attempts: int = DEFAULT_MAX_ATTEMPTS, clock: Clock = utc_clock,
              kind_filter: Optional[Iterable[str]] = ("controller",)) -> GenerationReport:
    """Run every task of ``plan`` and write artifacts, transcripts and the report under ``out_dir``.

    Tasks sharing a group form one conversation and run in order (detection
    first); distinct groups run concurrently on up to ``workers`` threads.
    Output is ordered by plan position, never by completion time.
    """
    if not plan.tasks:
        raise PlanError("empty plan")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    tasks = _with_ids(plan.tasks)
    groups: dict[str, list[GenerationTask]] = {}
    for t in tasks:
        groups.setdefault(t.group, []).append(t)
    kind_filter = tuple(kind_filter) if kind_filter is not None else None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_group, client, g, tiles, max_rounds, max_attempts, clock, kind_filter)
                   for g in groups.values()]
        outcomes = {o.report.task_id: o for f in futures for o in f.result()}
    ordered = [outcomes[t.task_id] for t in tasks]

    out_dir = Path(out_dir)
    (out_dir / "transcripts").mkdir(parents=True, exist_ok=True)
    artifacts, owners, taken = [], [], set()
    for o in ordered:
        if o.report.status != "accepted" or o.candidate is None:
            continue
        clash = [p for p in o.report.pous if p.upper() in taken]
        if clash:
            o.report.status = "failed"
            o.report.reason = f"duplicate POU name(s) {', '.join(clash)} already produced by an earlier task"
            o.report.needs_review = False
            continue
        taken.update(p.upper() for p in o.report.pous)
        artifacts.append(Artifact(o.candidate.unit, o.report.kind, o.report.task_id))
        owners.append(o.report)
    if artifacts:
        paths = write_st_files(artifacts, out_dir / "st")
        by_pou = {p.stem.upper(): p for p in paths}
        for rep in owners:
            rep.files = [f"st/{by_pou[name.upper()].name}" for name in rep.pous]

    for o in ordered:
        o.transcript.write(out_dir / "transcripts" / f"{o.report.task_id}.jsonl")
    drafts = [draft_plan(plan.name, o.elements, o.report.group) for o in ordered if o.elements is not None]
    if drafts:
        merged = Plan(f"{plan.name}-draft", _with_ids([t for d in drafts for t in d.tasks]))
        (out_dir / "plan.draft.json").write_text(json.dumps(merged.to_dict(), indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")
    report = GenerationReport(plan.name, [o.report for o in ordered])
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    return report


def accepted_units(report: GenerationReport, out_dir: Union[str, Path]) -> list[ast.SourceUnit]:
    """Re-read the accepted artifacts written by :func:`run_batch`."""
    from ..st.parser import parse

    out_dir = Path(out_dir)
    return [parse((out_dir / f).read_text(encoding="utf-8")) for t in report.accepted() for f in t.files]
