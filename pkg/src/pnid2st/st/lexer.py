"""Tokenizer for the Structured Text subset.

The lexer never aborts. Whitespace and characters it cannot classify are kept
as ``leading`` trivia on the following token, so joining ``leading + lexeme``
over the stream (EOF token included) reproduces the input exactly.
"""

from __future__ import annotations

import bisect
import enum
import re
from dataclasses import dataclass, field

from ..diagnostics import Diagnostic, SourceSpan, error


class TokenKind(str, enum.Enum):
    KEYWORD = "keyword"
    IDENT = "identifier"
    INTEGER = "integer-literal"
    REAL = "real-literal"
    TIME = "time-literal"
    STRING = "string-literal"
    OPERATOR = "operator"
    PUNCT = "punctuation"
    COMMENT = "comment"
    EOF = "eof"


KEYWORDS = frozenset("""
    PROGRAM END_PROGRAM FUNCTION_BLOCK END_FUNCTION_BLOCK
    VAR VAR_INPUT VAR_OUTPUT VAR_IN_OUT END_VAR CONSTANT
    IF THEN ELSIF ELSE END_IF CASE OF END_CASE
    FOR TO BY DO END_FOR WHILE END_WHILE EXIT RETURN
    TRUE FALSE AND OR XOR NOT MOD
""".split())

_OPERATORS = (":=", "=>", "<=", ">=", "<>", "**", "+", "-", "*", "/", "=", "<", ">", "&")
_PUNCT = ("..", "(", ")", ";", ":", ",", ".")

TIME_UNITS_MS = {"d": 86_400_000, "h": 3_600_000, "m": 60_000, "s": 1000, "ms": 1}
_TIME_BODY = re.compile(r"(?:(\d+(?:\.\d+)?)(ms|d|h|m|s)_?)", re.IGNORECASE | re.ASCII)
_TIME_FULL = re.compile(r"(?:\d+(?:\.\d+)?(?:ms|d|h|m|s)_?)+", re.IGNORECASE | re.ASCII)
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_BASED = re.compile(r"(\d+)#([0-9A-Za-z_]*)", re.ASCII)
_NUMBER = re.compile(r"\d[\d_]*(\.\d[\d_]*)?([eE][+-]?\d+)?", re.ASCII)
_STRING_ESCAPES = {"$": "$", "'": "'", '"': '"', "L": "\n", "N": "\n",
                   "P": "\f", "R": "\r", "T": "\t"}


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    lexeme: str
    span: SourceSpan
    leading: str = ""
    value: object = field(default=None, compare=False)

    @property
    def upper(self) -> str:
        return self.lexeme.upper()

    def is_kw(self, *names: str) -> bool:
        return self.kind is TokenKind.KEYWORD and self.lexeme.upper() in names

    def is_sym(self, *syms: str) -> bool:
        return self.kind in (TokenKind.OPERATOR, TokenKind.PUNCT) and self.lexeme in syms


def parse_time_ms(body: str) -> int | None:
    """Milliseconds for a duration body like ``1h30m`` or ``1.5s``; None if malformed."""
    negative = body.startswith("-")
    if negative:
        body = body[1:]
    if not body or not _TIME_FULL.fullmatch(body):
        return None
    total = 0.0
    for number, unit in _TIME_BODY.findall(body):
        total += float(number) * TIME_UNITS_MS[unit.lower()]
    ms = int(round(total))
    return -ms if negative else ms


def format_time(ms: int) -> str:
    """Canonical ``T#`` text for a millisecond count, largest units first."""
    if ms == 0:
        return "T#0s"
    sign = "-" if ms < 0 else ""
    rest = abs(ms)
    parts = []
    for unit in ("d", "h", "m", "s", "ms"):
        size = TIME_UNITS_MS[unit]
        n, rest = divmod(rest, size)
        if n:
            parts.append(f"{n}{unit}")
    return "T#" + sign + "".join(parts)


def unescape_string(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "$" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt.upper() in _STRING_ESCAPES:
                out.append(_STRING_ESCAPES[nxt.upper()])
                i += 2
                continue
            if re.fullmatch(r"[0-9A-Fa-f]{2}", body[i + 1:i + 3]):
                out.append(chr(int(body[i + 1:i + 3], 16)))
                i += 3
                continue
        out.append(c)
        i += 1
    return "".join(out)


def escape_string(value: str) -> str:
    table = {"$": "$$", "'": "$'", "\n": "$N", "\r": "$R", "\t": "$T", "\f": "$P"}
    return "'" + "".join(table.get(c, c) for c in value) + "'"


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[Token] = []
        self.diags: list[Diagnostic] = []
        self.trivia: list[str] = []
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def location(self, offset: int) -> tuple[int, int]:
        idx = bisect.bisect_right(self._line_starts, offset) - 1
        return idx + 1, offset - self._line_starts[idx] + 1

    def span(self, start: int, end: int) -> SourceSpan:
        line, col = self.location(start)
        eline, ecol = self.location(end)
        return SourceSpan(start, end, line, col, eline, ecol)

    def emit(self, kind: TokenKind, start: int, end: int, value=None) -> None:
        self.tokens.append(Token(kind, self.text[start:end], self.span(start, end),
                                 "".join(self.trivia), value))
        self.trivia = []
        self.pos = end

    def run(self) -> tuple[list[Token], list[Diagnostic]]:
        text = self.text
        n = len(text)
        while self.pos < n:
            c = text[self.pos]
            start = self.pos
            if c.isspace():
                end = start
                while end < n and text[end].isspace():
                    end += 1
                self.trivia.append(text[start:end])
                self.pos = end
            elif text.startswith("(*", start):
                close = text.find("*)", start + 2)
                if close < 0:
                    self.diags.append(error("S001", "unterminated comment", self.span(start, start + 2)))
                    self.emit(TokenKind.COMMENT, start, n, text[start + 2:])
                else:
                    self.emit(TokenKind.COMMENT, start, close + 2, text[start + 2:close])
            elif text.startswith("//", start):
                end = text.find("\n", start)
                end = n if end < 0 else end
                self.emit(TokenKind.COMMENT, start, end, text[start + 2:end])
            elif c == "'" or c == '"':
                self.lex_string(c)
            elif c in "0123456789":
                self.lex_number()
            elif (c.isascii() and c.isalpha()) or c == "_":
                self.lex_word()
            else:
                for sym in _OPERATORS + _PUNCT:
                    if text.startswith(sym, start):
                        kind = TokenKind.OPERATOR if sym in _OPERATORS else TokenKind.PUNCT
                        self.emit(kind, start, start + len(sym))
                        break
                else:
                    self.diags.append(error("S004", f"unexpected character {c!r}",
                                            self.span(start, start + 1)))
                    self.trivia.append(c)
                    self.pos += 1
        self.tokens.append(Token(TokenKind.EOF, "", self.span(n, n), "".join(self.trivia)))
        return self.tokens, self.diags

    def lex_string(self, quote: str) -> None:
        text, start = self.text, self.pos
        i = start + 1
        while i < len(text):
            ch = text[i]
            if ch == "$" and i + 1 < len(text) and text[i + 1] != "\n":
                i += 2
                continue
            if ch == quote:
                self.emit(TokenKind.STRING, start, i + 1, unescape_string(text[start + 1:i]))
                return
            if ch == "\n":
                break
            i += 1
        self.diags.append(error("S002", "unterminated string", self.span(start, i)))
        self.emit(TokenKind.STRING, start, i, unescape_string(text[start + 1:i]))

    def lex_number(self) -> None:
        text, start = self.text, self.pos
        based = _BASED.match(text, start)
        if based:
            base, digits = int(based.group(1)), based.group(2).replace("_", "")
            try:
                if base not in (2, 8, 16):
                    raise ValueError(base)
                value = int(digits, base)
            except ValueError:
                self.diags.append(error("S005", f"malformed number {based.group(0)!r}",
                                        self.span(start, based.end())))
                value = 0
            self.emit(TokenKind.INTEGER, start, based.end(), value)
            return
        m = _NUMBER.match(text, start)
        lexeme = m.group(0).replace("_", "")
        if m.group(1) or m.group(2):
            value = float(lexeme)
            if value == float("inf"):
                self.diags.append(error("S005", f"number {lexeme!r} is out of range", self.span(start, m.end())))
                value = 0.0
            self.emit(TokenKind.REAL, start, m.end(), value)
        else:
            self.emit(TokenKind.INTEGER, start, m.end(), int(lexeme))

    def lex_word(self) -> None:
        text, start = self.text, self.pos
        m = _IDENT.match(text, start)
        word = m.group(0)
        end = m.end()
        if word.upper() in ("T", "TIME") and end < len(text) and text[end] == "#":
            body_end = end + 1
            if body_end < len(text) and text[body_end] == "-":
                body_end += 1
            while body_end < len(text) and ((text[body_end].isascii() and text[body_end].isalnum()) or text[body_end] in "_."):
                body_end += 1
            ms = parse_time_ms(text[end + 1:body_end])
            if ms is None:
                self.diags.append(error("S003", f"malformed time literal {text[start:body_end]!r}",
                                        self.span(start, body_end)))
                ms = 0
            self.emit(TokenKind.TIME, start, body_end, ms)
            return
        kind = TokenKind.KEYWORD if word.upper() in KEYWORDS else TokenKind.IDENT
        self.emit(kind, start, end)


def tokenize(source: str) -> tuple[list[Token], list[Diagnostic]]:
    """Return the full token stream (comments included, EOF last) and lexical diagnostics."""
    return _Lexer(source).run()


def reconstruct(tokens: list[Token]) -> str:
    return "".join(t.leading + t.lexeme for t in tokens)
