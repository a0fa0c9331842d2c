"""Canonical ST text for an AST.

Layout is fixed (upper-case keywords, 4-space indent, one declaration per
line) and every comment is emitted in ``(* *)`` form regardless of how it
was written.
"""

from __future__ import annotations

from . import ast
from .lexer import escape_string, format_time
from .parser import PRECEDENCE, UNARY_PRECEDENCE

INDENT = "    "


def format_comment(comment: ast.Comment) -> str:
    text = comment.text.strip() if comment.slashes else comment.text
    # "*)" inside the body would end the comment early
    text = text.replace("*)", "* )")
    if comment.slashes:
        return f"(* {text} *)"
    return f"(*{text}*)"


def format_literal(lit: ast.Literal) -> str:
    t, v = lit.type_name, lit.value
    if t == "BOOL":
        return "TRUE" if v else "FALSE"
    if t == "TIME":
        return format_time(int(v))
    if t == "STRING":
        return escape_string(str(v))
    if t == "REAL":
        return repr(float(v))
    return str(int(v))


def _prec(expr: ast.Expr) -> float:
    if isinstance(expr, ast.Binary):
        return PRECEDENCE[expr.op]
    if isinstance(expr, ast.Unary):
        return UNARY_PRECEDENCE
    return 100


def format_expr(expr: ast.Expr) -> str:
    if isinstance(expr, ast.Literal):
        return format_literal(expr)
    if isinstance(expr, ast.VarRef):
        return expr.name
    if isinstance(expr, ast.Member):
        return f"{expr.base.name}.{expr.member}"
    if isinstance(expr, ast.Call):
        return f"{expr.name}({', '.join(format_expr(a) for a in expr.args)})"
    if isinstance(expr, ast.Unary):
        inner = format_expr(expr.operand)
        if _prec(expr.operand) < UNARY_PRECEDENCE:
            inner = f"({inner})"
        return f"NOT {inner}" if expr.op == "NOT" else f"{expr.op}{inner}"
    if isinstance(expr, ast.Binary):
        p = PRECEDENCE[expr.op]
        left, right = format_expr(expr.left), format_expr(expr.right)
        # left-associative: equal precedence needs parentheses on the right only
        if _prec(expr.left) < p:
            left = f"({left})"
        if _prec(expr.right) <= p:
            right = f"({right})"
        return f"{left} {expr.op} {right}"
    raise TypeError(f"not an expression: {expr!r}")


class _Printer:
    def __init__(self):
        self.lines: list[str] = []

    def emit(self, depth: int, text: str) -> None:
        self.lines.append(INDENT * depth + text)

    def comments(self, depth: int, comments) -> None:
        for c in comments:
            for i, line in enumerate(format_comment(c).split("\n")):
                # continuation lines of block comments are kept verbatim
                self.lines.append((INDENT * depth if i == 0 else "") + line)

    def unit(self, unit: ast.SourceUnit) -> str:
        for i, pou in enumerate(unit.pous):
            if i:
                self.lines.append("")
            self.pou(pou)
        if unit.trailing_comments:
            self.lines.append("")
            self.comments(0, unit.trailing_comments)
        return "\n".join(self.lines) + "\n"

    def pou(self, pou: ast.Pou) -> None:
        self.comments(0, pou.comments)
        self.emit(0, f"{pou.kind} {pou.name}")
        for section in pou.sections:
            self.section(section)
        self.block(1, pou.body)
        self.comments(1, pou.trailing_comments)
        self.emit(0, "END_" + pou.kind)

    def section(self, section: ast.VarSection) -> None:
        self.comments(0, section.comments)
        self.emit(0, section.kind + (" CONSTANT" if section.constant else ""))
        for decl in section.decls:
            self.comments(1, decl.comments)
            init = f" := {format_expr(decl.init)}" if decl.init is not None else ""
            self.emit(1, f"{decl.name} : {decl.type_name}{init};")
        self.emit(0, "END_VAR")

    def block(self, depth: int, stmts) -> None:
        for stmt in stmts:
            self.stmt(depth, stmt)

    def stmt(self, d: int, s: ast.Stmt) -> None:
        self.comments(d, s.comments)
        if isinstance(s, ast.Assign):
            self.emit(d, f"{format_expr(s.target)} := {format_expr(s.value)};")
        elif isinstance(s, ast.If):
            for i, branch in enumerate(s.branches):
                self.emit(d, f"{'IF' if i == 0 else 'ELSIF'} {format_expr(branch.condition)} THEN")
                self.block(d + 1, branch.body)
            if s.else_body is not None:
                self.emit(d, "ELSE")
                self.block(d + 1, s.else_body)
            self.emit(d, "END_IF;")
        elif isinstance(s, ast.Case):
            self.emit(d, f"CASE {format_expr(s.selector)} OF")
            for branch in s.branches:
                labels = ", ".join(f"{l.low}..{l.high}" if isinstance(l, ast.CaseRange) else str(l)
                                   for l in branch.labels)
                self.emit(d + 1, f"{labels}:")
                self.block(d + 2, branch.body)
            if s.else_body is not None:
                self.emit(d, "ELSE")
                self.block(d + 1, s.else_body)
            self.emit(d, "END_CASE;")
        elif isinstance(s, ast.For):
            step = f" BY {format_expr(s.step)}" if s.step is not None else ""
            self.emit(d, f"FOR {s.var} := {format_expr(s.start)} TO {format_expr(s.stop)}{step} DO")
            self.block(d + 1, s.body)
            self.emit(d, "END_FOR;")
        elif isinstance(s, ast.While):
            self.emit(d, f"WHILE {format_expr(s.condition)} DO")
            self.block(d + 1, s.body)
            self.emit(d, "END_WHILE;")
        elif isinstance(s, ast.FbCall):
            params = [f"{p.name} := {format_expr(p.value)}" for p in s.inputs]
            params += [f"{o.name} => {format_expr(o.target)}" for o in s.outputs]
            self.emit(d, f"{s.instance}({', '.join(params)});")
        elif isinstance(s, ast.Exit):
            self.emit(d, "EXIT;")
        elif isinstance(s, ast.Return):
            self.emit(d, "RETURN;")
        else:
            raise TypeError(f"not a statement: {s!r}")


def pretty_print(unit: ast.SourceUnit) -> str:
    return _Printer().unit(unit)


def format_body(stmts, depth: int = 0) -> str:
    """Statements only, as embedded in project XML bodies."""
    p = _Printer()
    p.block(depth, stmts)
    return "\n".join(p.lines) + ("\n" if p.lines else "")


def format_pou(pou: ast.Pou) -> str:
    p = _Printer()
    p.pou(pou)
    return "\n".join(p.lines) + "\n"
