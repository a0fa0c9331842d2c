import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, fixture_unit
from pnid2st.diagnostics import Severity, parse_records, render_records
from pnid2st.sema import assignable, check_source, check_unit, lint_style
from pnid2st.st.parser import parse


def prog(body: str, decls: str = "n : INT; d : DINT; r : REAL; b : BOOL; t : TIME; s : STRING;") -> str:
    return f"PROGRAM P\nVAR\n{decls}\nEND_VAR\n{body}\nEND_PROGRAM\n"


def errors(src: str):
    _, diags = check_unit(parse(src))
    return [(d.code, d.message) for d in diags]


def error_codes(src: str):
    return [c for c, _ in errors(src)]


@pytest.mark.parametrize("path", sorted(FIXTURES.rglob("*.st")), ids=lambda p: p.name)
def test_fixtures_have_no_errors_or_lints(path):
    unit = parse(path.read_text(encoding="utf-8"))
    _, diags = check_unit(unit)
    assert diags == []
    # the literals fixture keeps a // comment on purpose
    expected = ["L001"] if path.name == "literals_comments.st" else []
    assert [d.code for d in lint_style(unit)] == expected


def test_symbol_table_records_kinds_and_sections():
    table, _ = check_unit(fixture_unit("cascade_tc1_fc5.st"))
    tc = table.lookup("Cascade_TC1_FC5", "tc_1")
    assert (tc.kind, tc.type_name) == ("fb-instance", "PID")
    ti = table.lookup("CASCADE_TC1_FC5", "TI_1")
    assert (ti.kind, ti.type_name, ti.section) == ("variable", "REAL", "VAR_INPUT")


@pytest.mark.parametrize("body,code,fragment", [
    ("n := PV_4712_01;", "E201", "undeclared identifier 'PV_4712_01'"),
    ("n := r;", "E202", "implicit conversion from REAL to INT"),
    ("n := d;", "E202", "cannot assign DINT to INT"),
    ("b := n;", "E202", "cannot assign INT to BOOL"),
    ("IF n THEN n := 1; END_IF;", "E203", "condition must be BOOL"),
    ("WHILE r DO r := 0.0; END_WHILE;", "E203", "condition must be BOOL"),
    ("t := t + T#1s;", "E202", "not allowed on TIME"),
    ("n := n MOD r;", "E202", "MOD needs integral operands"),
    ("b := NOT n;", "E202", "NOT needs a BOOL operand"),
    ("b := s < n;", "E202", "cannot compare"),
    ("EXIT;", "E213", "EXIT outside of a loop"),
    ("CASE r OF 1: n := 1; END_CASE;", "E212", "CASE selector must be INT or DINT"),
    ("CASE n OF 1: n := 1; 1: n := 2; END_CASE;", "E212", "duplicate case label"),
    ("CASE n OF 5..3: n := 1; END_CASE;", "E212", "empty case range"),
    ("FOR r := 1 TO 3 DO END_FOR;", "E212", "FOR variable 'r' must be INT or DINT"),
    ("FOR n := 1 TO 3 BY 0 DO END_FOR;", "E212", "FOR step must not be zero"),
    ("n := FOO(1);", "E210", "unknown function 'FOO'"),
    ("n := ABS(1, 2);", "E210", "ABS takes"),
    ("n := REAL_TO_INT(b);", "E202", "REAL_TO_INT expects REAL"),
])
def test_type_rules(body, code, fragment):
    found = errors(prog(body))
    assert any(c == code and fragment in m for c, m in found), found


@pytest.mark.parametrize("body", [
    "r := n;", "r := d;", "d := n;", "d := n + d;", "r := n * 2.5;",
    "b := t > T#5s;", "t := T#5s;", "n := REAL_TO_INT(r);", "r := LIMIT(0.0, r, 100.0);",
    "FOR n := 10 TO 1 BY -1 DO IF n = 3 THEN EXIT; END_IF; END_FOR;",
    "s := 'ok';", "r := REAL_TO_INT(n);",
])
def test_well_typed_bodies(body):
    assert error_codes(prog(body)) == []


def test_int_literal_out_of_int_range_is_dint():
    assert "E202" in error_codes(prog("n := 40000 - 40000 + 1;"))
    assert "E202" in error_codes(prog("n := 40000;"))
    assert error_codes(prog("d := 40000;")) == []


def test_duplicate_declaration():
    assert "E206" in error_codes(prog("n := 1;", "n : INT; N : REAL;"))


def test_unknown_fb_type_is_error_and_not_self_contained_lint():
    src = prog("V(SP := 1.0);", "V : VendorPID;")
    assert "E204" in error_codes(src)
    lints = lint_style(parse(src))
    assert [d.code for d in lints] == ["L002"]
    assert "not self-contained" in lints[0].message


def test_constant_cannot_be_assigned():
    src = "PROGRAM P\nVAR CONSTANT\nK : INT := 3;\nEND_VAR\nVAR\nn : INT;\nEND_VAR\nK := 4; n := K;\nEND_PROGRAM\n"
    assert error_codes(src) == ["E211"]


def test_initializers_must_be_constant_and_typed():
    assert "E202" in error_codes(prog("n := m;", "n : INT; m : INT := n;"))
    assert "E202" in error_codes(prog("n := 1;", "n : INT := 1.5;"))
    assert error_codes(prog("r := 1.0;", "r : REAL := 2;")) == []


FB = """FUNCTION_BLOCK Valve
VAR_INPUT Cmd : BOOL; END_VAR
VAR_OUTPUT Open : BOOL; END_VAR
Open := Cmd;
END_FUNCTION_BLOCK
"""


@pytest.mark.parametrize("body,code,fragment", [
    ("V(Foo := TRUE);", "E208", "Valve has no input 'Foo'"),
    ("V(Cmd := TRUE, Cmd := FALSE);", "E208", "bound twice"),
    ("V(Cmd := TRUE, Shut => b);", "E208", "has no output 'Shut'"),
    ("V.Cmd := TRUE;", "E205", "cannot write to VAR_INPUT 'Cmd' of another instance"),
    ("b := V.Cmd;", "E209", "cannot read input 'Cmd'"),
    ("b := b.Q;", "E209", "is not an FB instance"),
    ("b := V;", "E202", "used as a value"),
    ("b();", "E210", "is not an FB instance"),
    ("b := Valve(TRUE);", "E210", "cannot be called inside an expression"),
    ("V(Cmd := n);", "E202", ""),
])
def test_fb_interface_rules(body, code, fragment):
    src = FB + prog(body, "V : Valve; b : BOOL; n : INT;")
    found = errors(src)
    assert any(c == code and fragment in m for c, m in found), found


def test_fb_outputs_can_be_read_and_bound():
    src = FB + prog("V(Cmd := TRUE, Open => b); b := V.Open AND b;", "V : Valve; b : BOOL;")
    assert error_codes(src) == []


def test_recursive_instantiation_is_rejected():
    src = ("FUNCTION_BLOCK A\nVAR x : B; END_VAR\nx();\nEND_FUNCTION_BLOCK\n"
           "FUNCTION_BLOCK B\nVAR y : A; END_VAR\ny();\nEND_FUNCTION_BLOCK\n")
    found = errors(src)
    assert any(c == "E210" and "recursive" in m for c, m in found)


def test_stdlib_timer_parameters():
    ok = prog("T1(IN := b, PT := T#5s); b := T1.Q; t := T1.ET;", "T1 : TON; b : BOOL; t : TIME;")
    assert error_codes(ok) == []
    bad = prog("T1(IN := b, PT := 5);", "T1 : TON; b : BOOL;")
    assert "E202" in error_codes(bad)


def test_lints_comment_notation_and_unused_variables():
    src = prog("// note\nn := 1;", "n : INT; spare : REAL;")
    lints = lint_style(parse(src))
    assert [d.code for d in lints] == ["L003", "L001"]
    assert "'spare'" in lints[0].message
    assert "comment notation not supported by target importer" in lints[1].message
    assert all(d.severity is Severity.LINT for d in lints)


def test_inputs_and_outputs_are_not_reported_unused():
    assert lint_style(parse(FB)) == []


def test_check_source_stops_at_syntax_errors():
    unit, diags = check_source("PROGRAM P x := END_PROGRAM")
    assert unit is None and diags and all(d.code.startswith("S") for d in diags)
    unit, diags = check_source(prog("// hi\nn := r;", "n : INT; r : REAL;"))
    assert unit is not None
    assert [d.code for d in diags] == ["L001", "E202"]


def test_diagnostics_are_span_ordered_and_deterministic():
    src = prog("n := x1;\nb := 3;\nn := x2;")
    first = errors(src)
    assert first == errors(src)
    _, diags = check_unit(parse(src))
    assert [(d.span.line, d.span.column) for d in diags] == sorted((d.span.line, d.span.column) for d in diags)


def test_error_spans_point_inside_the_construct():
    src = prog("n := 1;\nn := undeclared_thing;")
    (diag,) = check_unit(parse(src))[1]
    line = src.splitlines()[diag.span.line - 1]
    assert line[diag.span.column - 1:].startswith("undeclared_thing")


def test_machine_records_round_trip():
    _, diags = check_unit(parse(prog("IF n THEN n := 1; END_IF;")))
    records = parse_records(render_records(diags))
    assert records[0]["code"] == "E203"
    assert set(records[0]) >= {"code", "severity", "line", "column", "message"}


_ELEM = ["INT", "DINT", "REAL", "BOOL", "TIME", "STRING"]


@given(st.sampled_from(_ELEM), st.sampled_from(_ELEM))
def test_assignability_is_widening_only(src, dst):
    widening = {("INT", "DINT"), ("INT", "REAL"), ("DINT", "REAL")}
    assert assignable(src, dst) == (src == dst or (src, dst) in widening)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["n", "d", "r"]), min_size=1, max_size=6))
def test_sums_widen_to_widest_operand(names):
    expr = " + ".join(names)
    rank = {"n": 0, "d": 1, "r": 2}
    widest = max(names, key=rank.__getitem__)
    for target, trank in (("n", 0), ("d", 1), ("r", 2)):
        ok = error_codes(prog(f"{target} := {expr};")) == []
        assert ok == (rank[widest] <= trank)
