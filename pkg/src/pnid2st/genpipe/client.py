"""Vision-chat clients: a scripted mock for replay and an HTTP client for live runs.

Clients are stateless. The pipeline owns each conversation and resends the
full message history with every request.
"""

from __future__ import annotations

import base64
import json
import mimetypes
import os
import re
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

API_KEY_ENV = "PNID2ST_API_KEY"


class ClientError(RuntimeError):
    """Transient failure; the pipeline retries up to ``max_attempts``."""


class MockMismatch(RuntimeError):
    """A request did not match the mock script. Never retried."""


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    text: str
    images: tuple[str, ...] = ()


class ChatClient(Protocol):
    def send(self, messages: Sequence[Message], *, conversation: str = "") -> str: ...

    def describe(self) -> dict: ...


@dataclass(frozen=True)
class ClientConfig:
    model: str = ""
    endpoint: str = ""
    timeout_s: float = 120.0
    max_attempts: int = 3
    temperature: Optional[float] = None

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


# -- mock ---------------------------------------------------------------------

@dataclass(frozen=True)
class MockEntry:
    match: str
    response: str
    mode: str = "contains"  # contains | regex | exact
    conversation: str = ""

    def __post_init__(self):
        if self.mode not in ("contains", "regex", "exact"):
            raise ValueError(f"unknown match mode {self.mode!r}")

    def matches(self, prompt: str) -> bool:
        if self.mode == "exact":
            return prompt == self.match
        if self.mode == "regex":
            return re.search(self.match, prompt, re.S) is not None
        return self.match in prompt

    def to_record(self) -> dict:
        rec = {"match": self.match, "mode": self.mode, "response": self.response}
        if self.conversation:
            rec["conversation"] = self.conversation
        return rec


@dataclass
class MockScript:
    """Ordered canned responses.

    Strict scripts are consumed in order per conversation and any deviation
    fails. Lenient scripts answer with the first matching entry and can be
    reused.
    """

    entries: list[MockEntry] = field(default_factory=list)
    strict: bool = True

    @classmethod
    def loads(cls, text: str) -> "MockScript":
        entries, strict = [], True
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"mock script line {lineno}: {exc}") from None
            if "mockscript" in rec:
                strict = bool(rec.get("strict", True))
                continue
            try:
                entries.append(MockEntry(rec["match"], rec["response"], rec.get("mode", "contains"),
                                         rec.get("conversation", "")))
            except KeyError as exc:
                raise ValueError(f"mock script line {lineno}: missing key {exc}") from None
        return cls(entries, strict)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MockScript":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def dumps(self) -> str:
        lines = [json.dumps({"mockscript": 1, "strict": self.strict})]
        lines += [json.dumps(e.to_record(), ensure_ascii=False) for e in self.entries]
        return "\n".join(lines) + "\n"


def _last_user(messages: Sequence[Message]) -> str:
    for m in reversed(messages):
        if m.role == "user":
            return m.text
    return ""


class MockClient:
    def __init__(self, script: MockScript):
        self.script = script
        self._lock = threading.Lock()
        self._queues: dict[str, deque] = {}
        for e in script.entries:
            self._queues.setdefault(e.conversation, deque()).append(e)
        self.calls = 0

    def describe(self) -> dict:
        return {"mode": "mock", "strict": self.script.strict}

    def send(self, messages: Sequence[Message], *, conversation: str = "") -> str:
        prompt = _last_user(messages)
        with self._lock:
            self.calls += 1
            if self.script.strict:
                queue = self._queues.get(conversation) or self._queues.get("")
                if not queue:
                    raise MockMismatch(f"mock script exhausted for conversation {conversation!r}")
                entry = queue[0]
                if not entry.matches(prompt):
                    raise MockMismatch(f"request does not match next mock entry {entry.match[:60]!r} "
                                       f"(conversation {conversation!r}); prompt starts {prompt[:60]!r}")
                queue.popleft()
                return entry.response
            for key in (conversation, ""):
                for entry in self._queues.get(key, ()):
                    if entry.matches(prompt):
                        return entry.response
        raise MockMismatch(f"no mock entry matches prompt starting {prompt[:60]!r}")

    def remaining(self) -> int:
        with self._lock:
            return sum(len(q) for q in self._queues.values()) if self.script.strict else 0


# -- live ---------------------------------------------------------------------

def _image_part(ref: str) -> dict:
    path = Path(ref)
    mime = mimetypes.guess_type(path.name)[0] or "image/png"
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{data}"}}


class LiveClient:
    """Chat-completions style endpoint; images are sent inline as base64 data URLs."""

    def __init__(self, config: ClientConfig, api_key: Optional[str] = None, transport=None):
        import httpx

        if not config.endpoint or not config.model:
            raise ValueError("live client needs an endpoint and a model")
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not key:
            raise ValueError(f"live client needs the {API_KEY_ENV} environment variable")
        self.config = config
        self._http = httpx.Client(timeout=config.timeout_s, transport=transport,
                                  headers={"Authorization": f"Bearer {key}"})

    def describe(self) -> dict:
        out = {"mode": "live", "model": self.config.model, "endpoint": self.config.endpoint}
        if self.config.temperature is not None:
            out["temperature"] = self.config.temperature
        return out

    def payload(self, messages: Sequence[Message]) -> dict:
        body = []
        for m in messages:
            if m.images:
                content = [{"type": "text", "text": m.text}] + [_image_part(i) for i in m.images]
            else:
                content = m.text
            body.append({"role": m.role, "content": content})
        out = {"model": self.config.model, "messages": body}
        if self.config.temperature is not None:
            out["temperature"] = self.config.temperature
        return out

    def send(self, messages: Sequence[Message], *, conversation: str = "") -> str:
        import httpx

        try:
            resp = self._http.post(self.config.endpoint, json=self.payload(messages))
        except httpx.HTTPError as exc:
            raise ClientError(f"request failed: {exc}") from None
        if resp.status_code >= 400:
            raise ClientError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError):
            raise ClientError("malformed completion response") from None

    def close(self) -> None:
        self._http.close()
