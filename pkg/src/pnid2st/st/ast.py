"""Immutable AST for the ST subset.

Equality is structural: spans and comments are excluded from comparison, so
two parses of differently formatted but equivalent text compare equal.
Identifiers keep their source spelling; resolution is case-insensitive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from ..diagnostics import NO_SPAN, SourceSpan


def _span():
    return field(default=NO_SPAN, compare=False, repr=False)


def _comments():
    return field(default=(), compare=False, repr=False)


@dataclass(frozen=True)
class Comment:
    text: str
    slashes: bool = False  # written with `//` in the source
    span: SourceSpan = _span()


# -- expressions ------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    type_name: str  # BOOL, INT, REAL, TIME, STRING
    value: object
    span: SourceSpan = _span()


@dataclass(frozen=True)
class VarRef:
    name: str
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Member:
    base: VarRef
    member: str
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Unary:
    op: str  # "-", "+", "NOT"
    operand: "Expr"
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]
    span: SourceSpan = _span()


Expr = Union[Literal, VarRef, Member, Unary, Binary, Call]
LValue = Union[VarRef, Member]


# -- statements -------------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    target: LValue
    value: Expr
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class IfBranch:
    condition: Expr
    body: tuple["Stmt", ...]


@dataclass(frozen=True)
class If:
    branches: tuple[IfBranch, ...]  # IF then ELSIFs
    else_body: Optional[tuple["Stmt", ...]] = None
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class CaseRange:
    low: int
    high: int


@dataclass(frozen=True)
class CaseBranch:
    labels: tuple[Union[int, CaseRange], ...]
    body: tuple["Stmt", ...]


@dataclass(frozen=True)
class Case:
    selector: Expr
    branches: tuple[CaseBranch, ...]
    else_body: Optional[tuple["Stmt", ...]] = None
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class For:
    var: str
    start: Expr
    stop: Expr
    step: Optional[Expr]
    body: tuple["Stmt", ...]
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class While:
    condition: Expr
    body: tuple["Stmt", ...]
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class ParamBinding:
    name: str
    value: Expr
    span: SourceSpan = _span()


@dataclass(frozen=True)
class OutputBinding:
    name: str
    target: LValue
    span: SourceSpan = _span()


@dataclass(frozen=True)
class FbCall:
    instance: str
    inputs: tuple[ParamBinding, ...]
    outputs: tuple[OutputBinding, ...] = ()
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class Exit:
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class Return:
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


Stmt = Union[Assign, If, Case, For, While, FbCall, Exit, Return]


# -- declarations -----------------------------------------------------------

SECTION_KINDS = ("VAR", "VAR_INPUT", "VAR_OUTPUT", "VAR_IN_OUT")


@dataclass(frozen=True)
class VarDecl:
    name: str
    type_name: str
    init: Optional[Expr] = None
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class VarSection:
    kind: str  # one of SECTION_KINDS
    decls: tuple[VarDecl, ...]
    constant: bool = False
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()


@dataclass(frozen=True)
class Pou:
    kind: str  # PROGRAM | FUNCTION_BLOCK
    name: str
    sections: tuple[VarSection, ...]
    body: tuple[Stmt, ...]
    span: SourceSpan = _span()
    comments: tuple[Comment, ...] = _comments()
    trailing_comments: tuple[Comment, ...] = _comments()

    def decls(self):
        for section in self.sections:
            for decl in section.decls:
                yield section, decl


@dataclass(frozen=True)
class SourceUnit:
    pous: tuple[Pou, ...]
    trailing_comments: tuple[Comment, ...] = _comments()

    def pou(self, name: str) -> Optional[Pou]:
        key = name.upper()
        for pou in self.pous:
            if pou.name.upper() == key:
                return pou
        return None

    def comments(self):
        """Every comment in the unit, in source order where spans are known."""
        found: list[Comment] = []
        _collect_comments(self, found)
        return sorted(found, key=lambda c: c.span.start)


def _collect_comments(node, out: list) -> None:
    if isinstance(node, tuple):
        for item in node:
            _collect_comments(item, out)
        return
    if not hasattr(node, "__dataclass_fields__"):
        return
    for name in node.__dataclass_fields__:
        value = getattr(node, name)
        if name in ("comments", "trailing_comments"):
            out.extend(value)
        elif isinstance(value, tuple) or hasattr(value, "__dataclass_fields__"):
            _collect_comments(value, out)


def walk(node):
    """Yield every AST node at or below ``node`` (tuples are descended, not yielded)."""
    if isinstance(node, tuple):
        for item in node:
            yield from walk(item)
        return
    if not hasattr(node, "__dataclass_fields__"):
        return
    yield node
    for name in node.__dataclass_fields__:
        if name not in ("span", "comments", "trailing_comments"):
            yield from walk(getattr(node, name))
