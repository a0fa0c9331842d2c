from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from pnid2st.diagnostics import DiagnosticError
from pnid2st.st import ast
from pnid2st.st.lexer import TokenKind, format_time, parse_time_ms, reconstruct, tokenize
from pnid2st.st.parser import PRECEDENCE, parse, parse_text
from pnid2st.st.printer import format_expr, pretty_print


def codes(diags):
    return [d.code for d in diags]


def wrap(body: str, decls: str = "x : INT; y : INT; b : BOOL; r : REAL;") -> str:
    return f"PROGRAM P\nVAR\n{decls}\nEND_VAR\n{body}\nEND_PROGRAM\n"


def body_of(src: str):
    return parse(src).pous[0].body


def expr_of(text: str):
    (stmt,) = body_of(wrap(f"x := {text};"))
    return stmt.value


# -- lexer ---------------------------------------------------------------------------

@pytest.mark.parametrize("body,ms", [
    ("5m", 300_000), ("1h30m", 5_400_000), ("1.5s", 1500), ("250ms", 250), ("1d2h", 93_600_000),
    ("2m_30s", 150_000), ("0s", 0), ("-3s", -3000), ("1H", 3_600_000),
])
def test_time_bodies(body, ms):
    assert parse_time_ms(body) == ms


@pytest.mark.parametrize("body", ["", "5", "5x", "m5", "1.s", "--3s"])
def test_malformed_time_bodies(body):
    assert parse_time_ms(body) is None


@pytest.mark.parametrize("ms", [0, 1, 999, 1000, 61_001, 300_000, 93_600_000, -1500])
def test_format_time_inverts_parse(ms):
    text = format_time(ms)
    assert text.startswith("T#")
    assert parse_time_ms(text[2:]) == ms


def test_time_literal_spellings_normalize_to_ms():
    toks, diags = tokenize("T#5m TIME#300s t#5M time#0.5h")
    assert not diags
    values = [t.value for t in toks if t.kind is TokenKind.TIME]
    assert values == [300_000, 300_000, 300_000, 1_800_000]


def test_keywords_are_case_insensitive_but_lexemes_kept():
    toks, _ = tokenize("program If end_if")
    assert [t.kind for t in toks[:3]] == [TokenKind.KEYWORD] * 3
    assert [t.lexeme for t in toks[:3]] == ["program", "If", "end_if"]


def test_numbers_and_strings():
    toks, diags = tokenize("16#FF 2#1010 8#17 1_000 3.25 1.0e3 'it$'s$N'")
    assert not diags
    vals = [(t.kind, t.value) for t in toks if t.kind is not TokenKind.EOF]
    assert vals == [(TokenKind.INTEGER, 255), (TokenKind.INTEGER, 10), (TokenKind.INTEGER, 15),
                    (TokenKind.INTEGER, 1000), (TokenKind.REAL, 3.25), (TokenKind.REAL, 1000.0),
                    (TokenKind.STRING, "it's\n")]


@pytest.mark.parametrize("src,code", [
    ("x (* never closed", "S001"),
    ("x := 'open", "S002"),
    ("T#5q", "S003"),
    ("x ? y", "S004"),
    ("16#", "S005"),
])
def test_lexical_diagnostics(src, code):
    _, diags = tokenize(src)
    assert code in codes(diags)


def test_spans_are_one_based_lines_and_columns():
    toks, _ = tokenize("a\n  bb := 1;")
    bb = toks[1]
    assert (bb.lexeme, bb.span.line, bb.span.column) == ("bb", 2, 3)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.characters(codec="utf-8", exclude_categories=("Cs",)), max_size=200))
def test_lexer_is_total_and_lossless(src):
    toks, _ = tokenize(src)
    assert toks[-1].kind is TokenKind.EOF
    assert reconstruct(toks) == src


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="PROGRAMEND_IFTHEN:=;()*xy1 \n'/#", max_size=120))
def test_parser_never_raises_on_garbage(src):
    unit, diags = parse_text(src)
    assert isinstance(unit, ast.SourceUnit)


# -- parser --------------------------------------------------------------------------

def test_precedence_table_orders_operators():
    assert PRECEDENCE["OR"] < PRECEDENCE["XOR"] < PRECEDENCE["AND"] < PRECEDENCE["="]
    assert PRECEDENCE["="] < PRECEDENCE["<"] < PRECEDENCE["+"] < PRECEDENCE["*"] < PRECEDENCE["**"]
    assert PRECEDENCE["&"] == PRECEDENCE["AND"]


def test_binary_precedence_and_associativity():
    e = expr_of("1 + 2 * 3 - 4")
    assert e.op == "-" and e.left.op == "+" and e.left.right.op == "*"
    e = expr_of("10 - 3 - 2")
    assert e.left.op == "-" and e.right == ast.Literal("INT", 2)


def test_unary_binds_tighter_than_multiplication():
    e = expr_of("-x * y")
    assert e.op == "*" and isinstance(e.left, ast.Unary)


def test_if_elsif_else_structure():
    (stmt,) = body_of(wrap("IF b THEN x := 1; ELSIF x > 2 THEN x := 2; ELSE x := 3; END_IF;"))
    assert isinstance(stmt, ast.If)
    assert len(stmt.branches) == 2 and len(stmt.else_body) == 1


def test_case_labels_ranges_and_lists():
    (stmt,) = body_of(wrap("CASE x OF 1, 2: y := 1; 3..5: y := 2; ELSE y := 0; END_CASE;"))
    labels = [b.labels for b in stmt.branches]
    assert labels[0] == (1, 2)
    assert labels[1] == (ast.CaseRange(3, 5),)
    assert len(stmt.else_body) == 1


def test_fb_call_inputs_and_outputs():
    src = wrap("T(IN := b, PT := T#1s, Q => b);", "T : TON; b : BOOL;")
    (call,) = body_of(src)
    assert isinstance(call, ast.FbCall)
    assert [p.name for p in call.inputs] == ["IN", "PT"]
    assert [(o.name, o.target.name) for o in call.outputs] == [("Q", "b")]


def test_optional_semicolon_after_block_ends():
    body = body_of(wrap("IF b THEN x := 1; END_IF\nx := 2;"))
    assert len(body) == 2


def test_comments_attach_and_survive_round_trip():
    src = "(* header *)\nPROGRAM P\nVAR\n  x : INT; (* counter *)\nEND_VAR\n  // bump\n  x := x + 1;\nEND_PROGRAM\n"
    unit = parse(src)
    texts = [c.text.strip() for c in unit.comments()]
    assert texts == ["header", "counter", "bump"]
    printed = pretty_print(unit)
    assert "//" not in printed and "(* bump *)" in printed
    assert parse(printed) == unit


@pytest.mark.parametrize("src,code,fragment", [
    (wrap("IF b THEN x := 1;"), "S101", "expected END_IF, found"),
    (wrap("x := ;"), "S101", "expected expression"),
    ("FOO BAR", "S102", "unknown construct"),
    (wrap("") + wrap(""), "S103", "duplicate POU"),
])
def test_syntax_diagnostics(src, code, fragment):
    _, diags = parse_text(src)
    hits = [d for d in diags if d.code == code]
    assert hits and fragment in hits[0].message


def test_error_recovery_reports_several_errors():
    src = wrap("x := ;\ny := 1 +;\nx := 3;")
    unit, diags = parse_text(src)
    assert len([d for d in diags if d.code == "S101"]) >= 2
    assert any(isinstance(s, ast.Assign) and s.value == ast.Literal("INT", 3) for s in unit.pous[0].body)


def test_parse_raises_with_diagnostics():
    with pytest.raises(DiagnosticError) as info:
        parse("PROGRAM P x := END_PROGRAM")
    assert info.value.diagnostics


def test_diagnostic_render_format():
    _, diags = parse_text(wrap("IF b THEN x := 1;"))
    line = diags[0].render("p.st")
    assert line.startswith("p.st:") and "error[S101]" in line


# -- printer / round trip ----------------------------------------------------------------

@pytest.mark.parametrize("path", sorted(FIXTURES.glob("*.st")), ids=lambda p: p.name)
def test_fixture_round_trip(path: Path):
    unit = parse(path.read_text(encoding="utf-8"))
    printed = pretty_print(unit)
    assert parse(printed) == unit
    assert pretty_print(parse(printed)) == printed


_names = st.sampled_from(["x", "y", "r", "b"])
_lits = st.one_of(
    st.integers(0, 40_000).map(lambda v: ast.Literal("INT", v)),
    st.floats(0, 1e6, allow_nan=False).map(lambda v: ast.Literal("REAL", v)),
    st.booleans().map(lambda v: ast.Literal("BOOL", v)),
)
_atoms = st.one_of(_lits, _names.map(ast.VarRef))


def _extend(children):
    return st.one_of(
        st.builds(ast.Binary, st.sampled_from(sorted(set(PRECEDENCE) - {"&"})), children, children),
        st.builds(ast.Unary, st.sampled_from(["-", "NOT"]), children),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(_atoms, _extend, max_leaves=12))
def test_expression_print_parse_identity(expr):
    assert expr_of(format_expr(expr)) == expr
