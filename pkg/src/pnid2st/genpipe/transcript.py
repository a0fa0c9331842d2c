"""Append-only per-task transcripts, serialized as one JSON record per line.

Record types: ``task`` (always first), ``exchange``, ``repair``, ``warning``
and ``status`` (always last once the task is finished). Timestamps sit only
in exchange records under the ``timestamp`` key so they can be masked for
replay comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

from .client import MockEntry, MockScript

Clock = Callable[[], str]


def utc_clock() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def fixed_clock(stamp: str = "1970-01-01T00:00:00+00:00") -> Clock:
    return lambda: stamp


@dataclass
class Transcript:
    task_id: str
    task: dict
    conversation: str = ""
    client: dict = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)
    clock: Clock = field(default=utc_clock, repr=False, compare=False)

    def __post_init__(self):
        if not self.records:
            self.records.append({"type": "task", "task_id": self.task_id, "conversation": self.conversation,
                                 "client": self.client, "task": self.task})

    # append-only API
    def exchange(self, purpose: str, prompt: str, response: str, images: Iterable[str] = ()) -> None:
        self._append({"type": "exchange", "purpose": purpose, "prompt": prompt, "response": response,
                      "images": [Path(i).name for i in images], "timestamp": self.clock()})

    def repair(self, round_no: int, sent: list[dict], result: list[dict], verdict: str) -> None:
        self._append({"type": "repair", "round": round_no, "diagnostics_sent": sent,
                      "diagnostics_after": result, "verdict": verdict})

    def warn(self, message: str) -> None:
        self._append({"type": "warning", "message": message})

    def finish(self, status: str, reason: str = "") -> None:
        if status not in ("accepted", "failed"):
            raise ValueError(f"bad status {status!r}")
        self._append({"type": "status", "status": status, "reason": reason})

    def _append(self, record: dict) -> None:
        if self.status is not None:
            raise RuntimeError(f"transcript {self.task_id} is closed")
        self.records.append(record)

    # views
    @property
    def status(self) -> Optional[str]:
        last = self.records[-1]
        return last["status"] if last["type"] == "status" else None

    def exchanges(self) -> list[dict]:
        return [r for r in self.records if r["type"] == "exchange"]

    def warnings(self) -> list[str]:
        return [r["message"] for r in self.records if r["type"] == "warning"]

    def to_jsonl(self, timestamps: bool = True) -> str:
        lines = []
        for r in self.records:
            if not timestamps and "timestamp" in r:
                r = {k: v for k, v in r.items() if k != "timestamp"}
            lines.append(json.dumps(r, ensure_ascii=False, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not records or records[0].get("type") != "task":
            raise ValueError("transcript must start with a task record")
        head = records[0]
        return cls(head["task_id"], head["task"], head.get("conversation", ""), head.get("client", {}), records)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path


def strip_timestamps(jsonl: str) -> str:
    out = []
    for line in jsonl.splitlines():
        if line.strip():
            rec = json.loads(line)
            rec.pop("timestamp", None)
            out.append(json.dumps(rec, ensure_ascii=False, sort_keys=True))
    return "\n".join(out) + "\n"


def mockscript_from_transcripts(transcripts: Iterable[Transcript]) -> MockScript:
    """Strict script replaying every recorded exchange with exact prompt matching.

    Transcripts must be given in the order their exchanges happened within
    each conversation (plan order).
    """
    entries = []
    for t in transcripts:
        for ex in t.exchanges():
            entries.append(MockEntry(ex["prompt"], ex["response"], "exact", t.conversation))
    return MockScript(entries, strict=True)
