import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixture_unit
from pnid2st.diagnostics import DiagnosticError
from pnid2st.runtime import (
    FrozenRuntimeError, OverrideError, Ramp, ScenarioStep, SimulationAborted, UnknownPouError,
    instantiate, load_scenario, run, scan,
)
from pnid2st.st.parser import parse


def program(body: str, decls: str, outputs: str = "") -> str:
    outs = f"VAR_OUTPUT\n{outputs}\nEND_VAR\n" if outputs else ""
    return f"PROGRAM P\nVAR_INPUT\n{decls}\nEND_VAR\n{outs}{body}\nEND_PROGRAM\n"


def rt_for(src: str, cycle_ms: int = 100):
    return instantiate(parse(src), "P", cycle_ms)


def test_expression_fixture_values():
    rt = instantiate(fixture_unit("constructs_expressions.st"), "Expressions")
    out = scan(rt).outputs
    assert out["r1"] == 11 and out["r2"] == 2 and out["r3"] == 7007
    assert out["r4"] == pytest.approx(12.75) and out["r5"] == pytest.approx(11.0)
    assert out["r6"] is True and out["r7"] is True and out["r10"] is True
    assert out["r8"] == pytest.approx(4.5) and out["r9"] == 9
    assert out["r11"] == pytest.approx(27.0)


def test_loop_fixture_values():
    rt = instantiate(fixture_unit("constructs_loops.st"), "Loops")
    out = scan(rt).outputs
    assert out == {"Sum": 55, "Countdown": 0, "Iterations": 9, "FirstSquareOver50": 8}


@pytest.mark.parametrize("mode,text,speed", [
    (-1, "fault", 0), (0, "idle", 0), (2, "low", 100), (4, "medium", 1000),
    (7, "high", 100001), (12, "high", 100000), (10, "unknown", 0),
])
def test_case_fixture(mode, text, speed):
    rt = instantiate(fixture_unit("constructs_case.st"), "CaseDemo")
    out = scan(rt, {"Mode": mode}).outputs
    assert (out["Text"], out["Speed"]) == (text, speed)


@pytest.mark.parametrize("temp,override,band,heating,cooling", [
    (5.0, False, 0, True, False), (12.0, False, 1, True, False), (17.0, False, 1, False, False),
    (25.0, False, 2, False, False), (35.0, False, 3, False, True), (5.0, True, -1, False, False),
])
def test_if_chain_fixture(temp, override, band, heating, cooling):
    rt = instantiate(fixture_unit("constructs_if_elsif.st"), "IfChains")
    out = scan(rt, {"Temperature": temp, "Override": override}).outputs
    assert (out["Band"], out["Heating"], out["Cooling"]) == (band, heating, cooling)


def test_user_fb_in_out_and_nesting():
    rt = instantiate(fixture_unit("constructs_user_fb.st"), "Plant")
    # 3600 m3/h at 100 ms per scan is 0.1 m3 per scan; capacity 10 m3
    trace = run(rt, watch=["Batches", "Line1.Meter.Total"], scans=1000)
    batches = trace.column("Batches")
    assert batches[-1] in (9, 10)
    assert batches == sorted(batches)
    assert all(0.0 <= t < 10.0 for t in trace.column("Line1.Meter.Total"))


def test_variables_persist_across_scans_and_time_is_scan_clock():
    rt = rt_for(program("n := n + 1;", "go : BOOL;", "n : INT;"), cycle_ms=250)
    results = [scan(rt) for _ in range(4)]
    assert [r.outputs["n"] for r in results] == [1, 2, 3, 4]
    assert [r.time_ms for r in results] == [0, 250, 500, 750]
    assert rt.scan_count == 4 and rt.time_ms == 1000


def test_scan_reports_changed_outputs_only():
    rt = rt_for(program("IF go THEN n := 1; END_IF;", "go : BOOL;", "n : INT;"))
    assert scan(rt).changed == {}
    assert scan(rt, {"go": True}).changed == {"n": 1}
    assert scan(rt, {"go": True}).changed == {}


def test_ton_fixture_expires_after_five_minutes():
    rt = instantiate(fixture_unit("ton_5m.st"), "Ton5m")
    trace = run(rt, [ScenarioStep(0, 3001, {"Start": True})], watch=["Expired", "Elapsed"])
    expired = trace.column("Expired")
    assert expired.index(True) == 3000
    assert trace.column("Elapsed")[2999] == 299_900


def test_timers_and_edges_fixture():
    rt = instantiate(fixture_unit("timers_edges.st"), "TimersEdges")
    pattern = [False, True, True, False, False, True] + [True] * 25 + [False] * 10
    rows = []
    for b in pattern:
        rows.append(scan(rt, {"Button": b}).outputs)
    assert [r["Pulse"] for r in rows[:6]] == [False, True, False, False, False, True]
    assert [r["Released"] for r in rows[:6]] == [False, False, False, True, False, False]
    assert rows[-1]["Presses"] == 2
    assert rows[25]["OnDelayed"] is True and rows[24]["OnDelayed"] is False  # 2 s after scan 5
    assert rows[4]["OffDelayed"] is True  # still within 500 ms after release
    assert rows[31 + 5]["OffDelayed"] is False and rows[31 + 4]["OffDelayed"] is True


# -- traps ---------------------------------------------------------------------------

@pytest.mark.parametrize("body,decls,code", [
    ("n := n / z;", "n : INT := 1; z : INT;", "R301"),
    ("n := n MOD z;", "n : INT := 1; z : INT;", "R301"),
    ("r := r / q;", "r : REAL := 1.0; q : REAL;", "R301"),
    ("n := n + 32767;", "n : INT := 1;", "R302"),
    ("d := d * 2;", "d : DINT := 2000000000;", "R302"),
    ("r := r * 1.0E300 * 1.0E300;", "r : REAL := 1.0;", "R302"),
    ("WHILE TRUE DO n := 0; END_WHILE;", "n : INT;", "R303"),
    ("r := SQRT(r);", "r : REAL := -1.0;", "R304"),
    ("FOR n := 1 TO 3 BY z DO END_FOR;", "n : INT; z : INT;", "R304"),
])
def test_runtime_traps(body, decls, code):
    rt = rt_for(program(body, decls))
    result = scan(rt)
    assert result.trap is not None and result.trap.code == code
    assert rt.scan_count == 0  # a trapped scan does not advance the clock
    with pytest.raises(FrozenRuntimeError):
        scan(rt)


def test_pid_limit_trap():
    src = program("C(SP := 1.0, PV := 0.0, OUT_LOW := 10.0, OUT_HIGH := 5.0); r := C.OUT;",
                  "r : REAL;").replace("END_VAR\n", "END_VAR\nVAR C : PID; END_VAR\n", 1)
    result = scan(rt_for(src))
    assert result.trap.code == "R304"


def test_trap_keeps_state_inspectable_and_run_aborts():
    rt = rt_for(program("n := n + 1; IF n = 3 THEN n := n / z; END_IF;", "n : INT; z : INT;"))
    with pytest.raises(SimulationAborted) as info:
        run(rt, scans=10, watch=["n"])
    assert len(info.value.trace.records) == 2
    assert info.value.trap.code == "R301"
    assert rt.get("n") == 3


# -- overrides and instantiation --------------------------------------------------------

def test_overrides_are_type_checked():
    rt = rt_for(program("", "n : INT; b : BOOL; r : REAL; t : TIME;"))
    with pytest.raises(OverrideError, match="type mismatch"):
        scan(rt, {"b": 1})
    with pytest.raises(OverrideError, match="range"):
        scan(rt, {"n": 40000})
    with pytest.raises(OverrideError, match="unknown variable"):
        scan(rt, {"nope": 1})
    scan(rt, {"r": 3, "t": "T#5s"})
    assert rt.get("r") == 3.0 and isinstance(rt.get("r"), float) and rt.get("t") == 5000


def test_constants_cannot_be_overridden():
    src = "PROGRAM P\nVAR CONSTANT\nK : INT := 3;\nEND_VAR\nVAR_OUTPUT\nn : INT;\nEND_VAR\nn := K;\nEND_PROGRAM\n"
    rt = instantiate(parse(src), "P")
    with pytest.raises(OverrideError, match="constant"):
        scan(rt, {"K": 4})


def test_instantiate_rejects_unknown_pou_and_errors():
    with pytest.raises(UnknownPouError):
        instantiate(fixture_unit("ton_5m.st"), "Nope")
    with pytest.raises(DiagnosticError):
        instantiate(parse(program("n := 1.5;", "n : INT;")), "P")
    with pytest.raises(ValueError):
        instantiate(fixture_unit("ton_5m.st"), "Ton5m", cycle_ms=0)


def test_runs_are_deterministic():
    def once():
        unit = fixture_unit("pid_loop_tic2911.st")
        return run(instantiate(unit, unit.pous[-1].name), scans=200).to_csv()
    assert once() == once()


# -- scenarios and traces -----------------------------------------------------------------

def test_scenario_ramp_and_json_loading():
    doc = {"watch": ["x"], "steps": [{"from": 0, "to": 3, "set": {"x": {"ramp": [1.0, 0.5]}}},
                                     {"from": 5, "to": 6, "set": {"x": 9.0}}]}
    steps, watch = load_scenario(json.dumps(doc))
    assert watch == ["x"] and steps[0].overrides["x"] == Ramp(1.0, 0.5)
    rt = rt_for(program("", "x : REAL;"))
    trace = run(rt, steps, watch)
    assert trace.column("x") == [1.0, 1.5, 2.0, 2.0, 2.0, 9.0]
    assert trace.meta["scenario"][0]["set"]["x"] == {"ramp": [1.0, 0.5]}


def test_overlapping_scenarios_are_rejected():
    rt = rt_for(program("", "x : REAL;"))
    with pytest.raises(ValueError, match="non-overlapping"):
        run(rt, [ScenarioStep(0, 5, {}), ScenarioStep(3, 8, {})])


def test_trace_formats():
    rt = rt_for(program("n := n + 1; b := NOT b; t := T#1s; r := 0.5;", "x : REAL;",
                        "n : INT; b : BOOL; t : TIME; r : REAL;"))
    trace = run(rt, scans=2, watch=["n", "b", "t", "r"])
    assert trace.to_lines().splitlines() == [
        "scan=0 time_ms=0 n=1 b=TRUE t=T#1s r=0.5",
        "scan=1 time_ms=100 n=2 b=FALSE t=T#1s r=0.5",
    ]
    assert trace.to_csv().splitlines() == ["scan,time_ms,n,b,t,r", "0,0,1,1,1000,0.5", "1,100,2,0,1000,0.5"]


def test_watch_reaches_into_instances():
    rt = instantiate(fixture_unit("ton_5m.st"), "Ton5m")
    trace = run(rt, [ScenarioStep(0, 3, {"Start": True})], watch=["TON1.ET", "TON1.Q"])
    assert trace.column("TON1.ET") == [0, 100, 200]
    assert trace.types == ("TIME", "BOOL")


# -- soundness: well-typed programs never fault on types ---------------------------------

_INT_EXPRS = st.recursive(
    st.sampled_from(["a", "b", "1", "7", "(-3)"]),
    lambda c: st.tuples(c, st.sampled_from(["+", "-", "*"]), c).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
    max_leaves=6,
)


@settings(max_examples=200, deadline=None)
@given(_INT_EXPRS, st.integers(-50, 50), st.integers(-50, 50), st.booleans())
def test_well_typed_programs_only_trap_with_runtime_codes(expr, a, b, flag):
    src = program(f"d := {expr}; r := DINT_TO_REAL(d) * 0.5; IF flag AND d > 0 THEN c := c + 1; END_IF;",
                  "a : DINT; b : DINT; flag : BOOL;", "d : DINT; r : REAL; c : DINT;")
    rt = rt_for(src)
    for _ in range(3):
        result = scan(rt, {"a": a, "b": b, "flag": flag})
        if result.trap is not None:
            assert result.trap.code in ("R301", "R302", "R303", "R304")
            break
        assert isinstance(rt.get("d"), int) and isinstance(rt.get("r"), float)
