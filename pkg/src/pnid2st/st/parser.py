"""Recursive-descent parser with statement-level error recovery.

A syntax error is reported once, then the parser skips to the next statement
boundary (``;``, a statement keyword or a block terminator) and keeps going,
so one pass surfaces every independent error.
"""

from __future__ import annotations

from typing import Optional

from ..diagnostics import Diagnostic, DiagnosticError, SourceSpan, error, has_errors
from . import ast
from .lexer import Token, TokenKind, tokenize

_STMT_START = frozenset({"IF", "CASE", "FOR", "WHILE", "EXIT", "RETURN"})
_BLOCK_END = frozenset({
    "END_IF", "ELSIF", "ELSE", "END_CASE", "END_FOR", "END_WHILE",
    "END_PROGRAM", "END_FUNCTION_BLOCK", "END_VAR",
})
_POU_END = {"PROGRAM": "END_PROGRAM", "FUNCTION_BLOCK": "END_FUNCTION_BLOCK"}
_SECTIONS = frozenset(ast.SECTION_KINDS)

# binary precedence levels, loosest first
_LEVELS = (
    ("OR",),
    ("XOR",),
    ("AND", "&"),
    ("=", "<>"),
    ("<", ">", "<=", ">="),
    ("+", "-"),
    ("*", "/", "MOD"),
    ("**",),
)
PRECEDENCE = {op: i for i, ops in enumerate(_LEVELS) for op in ops}
UNARY_PRECEDENCE = len(_LEVELS) - 1.5  # between * and **


class ParseError(Exception):
    def __init__(self, diag: Diagnostic):
        super().__init__(diag.message)
        self.diag = diag


class Parser:
    def __init__(self, tokens: list[Token]):
        self.toks: list[Token] = []
        self.comments_before: list[list[ast.Comment]] = []
        pending: list[ast.Comment] = []
        for tok in tokens:
            if tok.kind is TokenKind.COMMENT:
                pending.append(ast.Comment(str(tok.value), tok.lexeme.startswith("//"), tok.span))
            else:
                self.toks.append(tok)
                self.comments_before.append(pending)
                pending = []
        if not self.toks or self.toks[-1].kind is not TokenKind.EOF:
            raise ValueError("token stream must end with EOF")
        self.pos = 0
        self.taken = 0  # comments before toks[:taken] have been attached
        self.diags: list[Diagnostic] = []

    # -- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        tok = self.tok
        if tok.kind is not TokenKind.EOF:
            self.pos += 1
        return tok

    def prev_span(self) -> SourceSpan:
        return self.toks[self.pos - 1].span if self.pos else self.tok.span

    def span_from(self, start: Token) -> SourceSpan:
        return start.span.cover(self.prev_span()) if self.pos else start.span

    def take_comments(self) -> tuple[ast.Comment, ...]:
        out: list[ast.Comment] = []
        while self.taken <= self.pos:
            out.extend(self.comments_before[self.taken])
            self.taken += 1
        return tuple(out)

    def fail(self, message: str, code: str = "S101", tok: Optional[Token] = None):
        raise ParseError(error(code, message, (tok or self.tok).span))

    def describe(self, tok: Token) -> str:
        return "end of input" if tok.kind is TokenKind.EOF else repr(tok.lexeme)

    def expect_kw(self, name: str) -> Token:
        if not self.tok.is_kw(name):
            self.fail(f"expected {name}, found {self.describe(self.tok)}")
        return self.advance()

    def expect_sym(self, sym: str) -> Token:
        if not self.tok.is_sym(sym):
            self.fail(f"expected '{sym}', found {self.describe(self.tok)}")
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.tok.kind is not TokenKind.IDENT:
            self.fail(f"expected {what}, found {self.describe(self.tok)}")
        return self.advance()

    def accept_sym(self, sym: str) -> bool:
        if self.tok.is_sym(sym):
            self.advance()
            return True
        return False

    # -- unit / POU -------------------------------------------------------

    def parse_unit(self) -> ast.SourceUnit:
        pous: list[ast.Pou] = []
        seen: set[str] = set()
        while self.tok.kind is not TokenKind.EOF:
            if self.tok.is_kw("PROGRAM", "FUNCTION_BLOCK"):
                try:
                    pou = self.parse_pou()
                except ParseError as exc:
                    self.diags.append(exc.diag)
                    self.skip_to_pou()
                    continue
                if pou.name.upper() in seen:
                    self.diags.append(error("S103", f"duplicate POU name {pou.name!r}", pou.span))
                seen.add(pou.name.upper())
                pous.append(pou)
            else:
                self.diags.append(error("S102", f"unknown construct at top level: {self.describe(self.tok)}",
                                        self.tok.span))
                self.advance()
                self.skip_to_pou()
        trailing = self.take_comments()
        return ast.SourceUnit(tuple(pous), trailing)

    def skip_to_pou(self) -> None:
        while self.tok.kind is not TokenKind.EOF and not self.tok.is_kw("PROGRAM", "FUNCTION_BLOCK"):
            self.advance()

    def parse_pou(self) -> ast.Pou:
        comments = self.take_comments()
        start = self.advance()
        kind = start.upper
        name = self.expect_ident("POU name").lexeme
        sections = []
        while self.tok.is_kw(*_SECTIONS):
            sections.append(self.parse_section())
        body = self.parse_stmts(frozenset({_POU_END[kind]}))
        trailing = self.take_comments()
        self.expect_kw(_POU_END[kind])
        return ast.Pou(kind, name, tuple(sections), body, self.span_from(start), comments, trailing)

    def parse_section(self) -> ast.VarSection:
        comments = self.take_comments()
        start = self.advance()
        constant = False
        if self.tok.is_kw("CONSTANT"):
            self.advance()
            constant = True
        decls: list[ast.VarDecl] = []
        while not self.tok.is_kw("END_VAR"):
            if self.tok.kind is not TokenKind.IDENT:
                # section left open: report and let the POU parse continue
                self.diags.append(error("S101", f"expected END_VAR, found {self.describe(self.tok)}",
                                        self.tok.span))
                return ast.VarSection(start.upper, tuple(decls), constant, self.span_from(start), comments)
            try:
                decls.extend(self.parse_decl())
            except ParseError as exc:
                self.diags.append(exc.diag)
                while not (self.tok.kind is TokenKind.EOF or self.tok.is_kw("END_VAR")
                           or self.tok.kind is TokenKind.KEYWORD and self.tok.upper in _BLOCK_END | _STMT_START):
                    if self.advance().is_sym(";"):
                        break
        self.advance()
        self.accept_sym(";")
        return ast.VarSection(start.upper, tuple(decls), constant, self.span_from(start), comments)

    def parse_decl(self) -> list[ast.VarDecl]:
        comments = self.take_comments()
        first = self.tok
        names = [self.expect_ident("variable name")]
        while self.accept_sym(","):
            names.append(self.expect_ident("variable name"))
        self.expect_sym(":")
        type_name = self.expect_ident("type name").lexeme
        init = None
        if self.accept_sym(":="):
            init = self.parse_expr()
        self.expect_sym(";")
        span = self.span_from(first)
        return [ast.VarDecl(n.lexeme, type_name, init, span, comments if i == 0 else ())
                for i, n in enumerate(names)]

    # -- statements -------------------------------------------------------

    def at_stmts_end(self, stops: frozenset[str]) -> bool:
        tok = self.tok
        if tok.kind is TokenKind.EOF:
            return True
        if tok.kind is TokenKind.KEYWORD and (tok.upper in stops or tok.upper in _BLOCK_END):
            return True
        return False

    def parse_stmts(self, stops: frozenset[str], case_labels: bool = False) -> tuple[ast.Stmt, ...]:
        out: list[ast.Stmt] = []
        while not self.at_stmts_end(stops):
            if case_labels and self.at_case_label():
                break
            if self.accept_sym(";"):
                continue
            start = self.pos
            try:
                out.append(self.parse_stmt())
            except ParseError as exc:
                self.diags.append(exc.diag)
                self.synchronize(stops)
                if self.pos == start and not self.at_stmts_end(stops):
                    self.advance()
        return tuple(out)

    def synchronize(self, stops: frozenset[str]) -> None:
        while not self.at_stmts_end(stops):
            tok = self.tok
            if tok.kind is TokenKind.KEYWORD and tok.upper in _STMT_START:
                return
            self.advance()
            if tok.is_sym(";"):
                return

    def at_case_label(self) -> bool:
        tok = self.tok
        if tok.kind is TokenKind.INTEGER:
            return True
        return tok.is_sym("-") and self.peek().kind is TokenKind.INTEGER

    def parse_stmt(self) -> ast.Stmt:
        tok = self.tok
        if tok.kind is TokenKind.KEYWORD:
            kw = tok.upper
            if kw == "IF":
                return self.parse_if()
            if kw == "CASE":
                return self.parse_case()
            if kw == "FOR":
                return self.parse_for()
            if kw == "WHILE":
                return self.parse_while()
            if kw in ("EXIT", "RETURN"):
                comments = self.take_comments()
                self.advance()
                self.expect_sym(";")
                cls = ast.Exit if kw == "EXIT" else ast.Return
                return cls(self.span_from(tok), comments)
            self.fail(f"unexpected keyword {tok.lexeme}", "S102")
        if tok.kind is not TokenKind.IDENT:
            self.fail(f"expected statement, found {self.describe(tok)}", "S102")
        comments = self.take_comments()
        if self.peek().is_sym("("):
            return self.parse_fb_call(comments)
        target = self.parse_lvalue()
        self.expect_sym(":=")
        value = self.parse_expr()
        self.expect_sym(";")
        return ast.Assign(target, value, self.span_from(tok), comments)

    def end_block(self, kw: str) -> None:
        self.expect_kw(kw)
        self.accept_sym(";")

    def parse_if(self) -> ast.If:
        comments = self.take_comments()
        start = self.advance()
        stops = frozenset({"ELSIF", "ELSE", "END_IF"})
        cond = self.parse_expr()
        self.expect_kw("THEN")
        branches = [ast.IfBranch(cond, self.parse_stmts(stops))]
        else_body = None
        while self.tok.is_kw("ELSIF"):
            self.advance()
            cond = self.parse_expr()
            self.expect_kw("THEN")
            branches.append(ast.IfBranch(cond, self.parse_stmts(stops)))
        if self.tok.is_kw("ELSE"):
            self.advance()
            else_body = self.parse_stmts(frozenset({"END_IF"}))
        self.end_block("END_IF")
        return ast.If(tuple(branches), else_body, self.span_from(start), comments)

    def parse_case(self) -> ast.Case:
        comments = self.take_comments()
        start = self.advance()
        selector = self.parse_expr()
        self.expect_kw("OF")
        stops = frozenset({"ELSE", "END_CASE"})
        branches = []
        while self.at_case_label():
            labels = [self.parse_case_label()]
            while self.accept_sym(","):
                labels.append(self.parse_case_label())
            self.expect_sym(":")
            branches.append(ast.CaseBranch(tuple(labels), self.parse_stmts(stops, case_labels=True)))
        if not branches and not self.tok.is_kw("ELSE", "END_CASE"):
            self.fail(f"expected case label, found {self.describe(self.tok)}")
        else_body = None
        if self.tok.is_kw("ELSE"):
            self.advance()
            else_body = self.parse_stmts(frozenset({"END_CASE"}))
        self.end_block("END_CASE")
        return ast.Case(selector, tuple(branches), else_body, self.span_from(start), comments)

    def parse_case_int(self) -> int:
        negative = self.accept_sym("-")
        tok = self.tok
        if tok.kind is not TokenKind.INTEGER:
            self.fail(f"expected integer case label, found {self.describe(tok)}")
        self.advance()
        return -tok.value if negative else tok.value

    def parse_case_label(self):
        low = self.parse_case_int()
        if self.accept_sym(".."):
            return ast.CaseRange(low, self.parse_case_int())
        return low

    def parse_for(self) -> ast.For:
        comments = self.take_comments()
        start = self.advance()
        var = self.expect_ident("loop variable").lexeme
        self.expect_sym(":=")
        first = self.parse_expr()
        self.expect_kw("TO")
        last = self.parse_expr()
        step = None
        if self.tok.is_kw("BY"):
            self.advance()
            step = self.parse_expr()
        self.expect_kw("DO")
        body = self.parse_stmts(frozenset({"END_FOR"}))
        self.end_block("END_FOR")
        return ast.For(var, first, last, step, body, self.span_from(start), comments)

    def parse_while(self) -> ast.While:
        comments = self.take_comments()
        start = self.advance()
        cond = self.parse_expr()
        self.expect_kw("DO")
        body = self.parse_stmts(frozenset({"END_WHILE"}))
        self.end_block("END_WHILE")
        return ast.While(cond, body, self.span_from(start), comments)

    def parse_fb_call(self, comments) -> ast.FbCall:
        start = self.advance()
        self.expect_sym("(")
        inputs: list[ast.ParamBinding] = []
        outputs: list[ast.OutputBinding] = []
        if not self.tok.is_sym(")"):
            while True:
                name = self.expect_ident("parameter name")
                if self.accept_sym("=>"):
                    target = self.parse_lvalue()
                    outputs.append(ast.OutputBinding(name.lexeme, target, self.span_from(name)))
                else:
                    self.expect_sym(":=")
                    value = self.parse_expr()
                    inputs.append(ast.ParamBinding(name.lexeme, value, self.span_from(name)))
                if not self.accept_sym(","):
                    break
        self.expect_sym(")")
        self.expect_sym(";")
        return ast.FbCall(start.lexeme, tuple(inputs), tuple(outputs), self.span_from(start), comments)

    def parse_lvalue(self) -> ast.LValue:
        tok = self.expect_ident("variable")
        ref = ast.VarRef(tok.lexeme, tok.span)
        if self.accept_sym("."):
            member = self.expect_ident("member name")
            return ast.Member(ref, member.lexeme, self.span_from(tok))
        return ref

    # -- expressions ------------------------------------------------------

    def parse_expr(self, level: int = 0) -> ast.Expr:
        if level == len(_LEVELS) - 1:
            return self.parse_power()
        if level == len(_LEVELS) - 2:
            # multiplicative operands are unary expressions
            left = self.parse_unary()
        else:
            left = self.parse_expr(level + 1)
        ops = _LEVELS[level]
        while self.tok.lexeme.upper() in ops and self.tok.kind in (TokenKind.OPERATOR, TokenKind.KEYWORD):
            op = self.advance().lexeme.upper()
            if op == "&":
                op = "AND"
            if level == len(_LEVELS) - 2:
                right = self.parse_unary()
            else:
                right = self.parse_expr(level + 1)
            left = ast.Binary(op, left, right, left.span.cover(right.span))
        return left

    def parse_unary(self) -> ast.Expr:
        tok = self.tok
        if tok.is_sym("-", "+") or tok.is_kw("NOT"):
            self.advance()
            operand = self.parse_unary()
            return ast.Unary(tok.lexeme.upper(), operand, tok.span.cover(operand.span))
        return self.parse_power()

    def parse_power(self) -> ast.Expr:
        left = self.parse_primary()
        while self.tok.is_sym("**"):
            self.advance()
            right = self.parse_primary()
            left = ast.Binary("**", left, right, left.span.cover(right.span))
        return left

    def parse_primary(self) -> ast.Expr:
        tok = self.tok
        kind = tok.kind
        if kind is TokenKind.INTEGER:
            self.advance()
            return ast.Literal("INT", tok.value, tok.span)
        if kind is TokenKind.REAL:
            self.advance()
            return ast.Literal("REAL", tok.value, tok.span)
        if kind is TokenKind.TIME:
            self.advance()
            return ast.Literal("TIME", tok.value, tok.span)
        if kind is TokenKind.STRING:
            self.advance()
            return ast.Literal("STRING", tok.value, tok.span)
        if tok.is_kw("TRUE", "FALSE"):
            self.advance()
            return ast.Literal("BOOL", tok.upper == "TRUE", tok.span)
        if tok.is_sym("("):
            self.advance()
            inner = self.parse_expr()
            self.expect_sym(")")
            return inner
        if kind is TokenKind.IDENT:
            self.advance()
            if self.tok.is_sym("("):
                self.advance()
                args: list[ast.Expr] = []
                if not self.tok.is_sym(")"):
                    args.append(self.parse_expr())
                    while self.accept_sym(","):
                        args.append(self.parse_expr())
                self.expect_sym(")")
                return ast.Call(tok.lexeme, tuple(args), self.span_from(tok))
            ref = ast.VarRef(tok.lexeme, tok.span)
            if self.accept_sym("."):
                member = self.expect_ident("member name")
                return ast.Member(ref, member.lexeme, self.span_from(tok))
            return ref
        self.fail(f"expected expression, found {self.describe(tok)}")


def parse_unit(tokens: list[Token]) -> tuple[ast.SourceUnit, list[Diagnostic]]:
    """Parse a token stream from :func:`tokenize`; returns the (possibly partial) unit and diagnostics."""
    parser = Parser(tokens)
    unit = parser.parse_unit()
    return unit, parser.diags


def parse_text(source: str) -> tuple[ast.SourceUnit, list[Diagnostic]]:
    tokens, lex_diags = tokenize(source)
    unit, diags = parse_unit(tokens)
    return unit, lex_diags + diags


def parse(source: str) -> ast.SourceUnit:
    """Parse ``source`` or raise :class:`DiagnosticError` listing every syntax error."""
    unit, diags = parse_text(source)
    if has_errors(diags):
        raise DiagnosticError("syntax errors", diags)
    return unit
