"""Source spans and diagnostics shared by every stage of the toolchain.

Diagnostic codes are stable: repair prompts embed them, so a code is never
renamed or reused once published.

    S0xx  lexical          S1xx  syntax
    E2xx  semantic errors  L0xx  style lints
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True, order=True)
class SourceSpan:
    """Half-open byte range ``[start, end)`` with 1-based line/column of both ends."""

    start: int
    end: int
    line: int = 1
    column: int = 1
    end_line: int = 1
    end_column: int = 1

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"span start {self.start} > end {self.end}")
        if self.line < 1 or self.column < 1:
            raise ValueError("lines and columns are 1-based")

    def cover(self, other: "SourceSpan") -> "SourceSpan":
        first = self if self.start <= other.start else other
        last = other if other.end >= self.end else self
        return SourceSpan(first.start, last.end, first.line, first.column,
                          last.end_line, last.end_column)


NO_SPAN = SourceSpan(0, 0)


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"
    LINT = "lint"


# code -> short title; the human message adds specifics
CODES = {
    "S001": "unterminated comment",
    "S002": "unterminated string",
    "S003": "malformed time literal",
    "S004": "unexpected character",
    "S005": "malformed number",
    "S101": "unexpected token",
    "S102": "unknown construct",
    "S103": "duplicate POU name",
    "E201": "undeclared identifier",
    "E202": "type mismatch",
    "E203": "condition must be BOOL",
    "E204": "unknown FB type",
    "E205": "write to member of another instance",
    "E206": "duplicate declaration",
    "E208": "unknown FB parameter",
    "E209": "invalid member access",
    "E210": "invalid call",
    "E211": "assignment to constant",
    "E212": "invalid loop or case construct",
    "E213": "EXIT outside loop",
    "L001": "comment notation not supported by target importer",
    "L002": "not self-contained",
    "L003": "unused variable",
}


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    span: SourceSpan

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def sort_key(self):
        return (self.span.start, self.span.end, self.code, self.message)

    def render(self, filename: str = "<input>") -> str:
        return (f"{filename}:{self.span.line}:{self.span.column}: "
                f"{self.severity.value}[{self.code}]: {self.message}")

    def to_record(self) -> dict:
        return {
            "code": self.code,
            "severity": self.severity.value,
            "line": self.span.line,
            "column": self.span.column,
            "message": self.message,
        }


def error(code: str, message: str, span: SourceSpan) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, span)


def lint(code: str, message: str, span: SourceSpan) -> Diagnostic:
    return Diagnostic(Severity.LINT, code, message, span)


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diags)


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return sorted(diags, key=Diagnostic.sort_key)


def render_text(diags: Iterable[Diagnostic], filename: str = "<input>") -> str:
    return "".join(d.render(filename) + "\n" for d in diags)


def render_records(diags: Iterable[Diagnostic]) -> str:
    """One JSON object per line: code, severity, line, column, message."""
    return "".join(json.dumps(d.to_record(), sort_keys=True) + "\n" for d in diags)


def parse_records(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


class DiagnosticError(Exception):
    """Raised by convenience entry points when a stage produced errors."""

    def __init__(self, message: str, diagnostics: Iterable[Diagnostic] = ()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)

    def __str__(self) -> str:
        base = super().__str__()
        errs = [d for d in self.diagnostics if d.is_error]
        if not errs:
            return base
        return base + "\n" + render_text(errs).rstrip()
