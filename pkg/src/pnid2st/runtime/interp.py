"""Cyclic-scan interpreter for checked ST units.

Each POU body is compiled once into nested Python closures; instances hold
their variables in plain dicts keyed by upper-case name. A scan applies
input overrides, runs the entry body exactly once at time
``scan_index * cycle_ms`` and advances the scan counter.

Runtime faults raise :class:`Trap`. A trapped runtime is frozen: its state
stays inspectable but further scans are refused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from ..diagnostics import DiagnosticError, SourceSpan, has_errors
from ..sema import (
    CONVERSIONS, ELEMENTARY, INT_RANGE, INTEGRAL, STDLIB_FBS, SymbolTable, check_unit,
)
from ..st import ast
from ..st.lexer import escape_string, format_time, parse_time_ms
from .fbs import PidState, TimerState, TrigState, ftrig_step, pid_step, rtrig_step, tof_step, ton_step

DEFAULT_CYCLE_MS = 100
LOOP_BUDGET = 1_000_000  # loop iterations per scan before the watchdog trips

TRAP_CODES = {
    "R301": "division by zero",
    "R302": "overflow",
    "R303": "watchdog: loop iteration limit exceeded",
    "R304": "invalid argument",
}


class Trap(Exception):
    def __init__(self, code: str, message: str, span: Optional[SourceSpan] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.span = span

    def __str__(self) -> str:
        where = f" at {self.span.line}:{self.span.column}" if self.span else ""
        return f"trap {self.code}: {self.message}{where}"


class UnknownPouError(LookupError):
    pass


class OverrideError(ValueError):
    pass


class FrozenRuntimeError(RuntimeError):
    pass


def default_value(type_name: str):
    return {"BOOL": False, "INT": 0, "DINT": 0, "REAL": 0.0, "TIME": 0, "STRING": ""}[type_name]


def format_value(value, type_name: str) -> str:
    """ST literal text for a runtime value."""
    if type_name == "BOOL":
        return "TRUE" if value else "FALSE"
    if type_name == "TIME":
        return format_time(value)
    if type_name == "STRING":
        return escape_string(value)
    if type_name == "REAL":
        return repr(float(value))
    return str(value)


def coerce_override(value, type_name: str, name: str):
    """Validate a host-supplied value for a variable of ``type_name``."""
    if type_name == "BOOL":
        if isinstance(value, bool):
            return value
    elif type_name in INTEGRAL:
        if isinstance(value, int) and not isinstance(value, bool):
            lo, hi = INT_RANGE[type_name]
            if lo <= value <= hi:
                return value
            raise OverrideError(f"{name}: {value} out of {type_name} range")
    elif type_name == "REAL":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if math.isfinite(value):
                return float(value)
    elif type_name == "TIME":
        if isinstance(value, str):
            text = value.split("#", 1)[1] if "#" in value else value
            ms = parse_time_ms(text)
            if ms is not None:
                return ms
        elif isinstance(value, int) and not isinstance(value, bool):
            return value
    elif type_name == "STRING":
        if isinstance(value, str):
            return value
    raise OverrideError(f"type mismatch for {name}: {value!r} is not a valid {type_name}")


@dataclass
class _Ctx:
    now_ms: int
    cycle_ms: int
    budget: int = LOOP_BUDGET


class _ExitLoop(Exception):
    pass


class _ReturnPou(Exception):
    pass


class Instance:
    """State of one POU or FB instance; ``vars`` holds every scalar, ``children`` nested instances."""

    def __init__(self, type_name: str):
        self.type_name = type_name
        self.vars: dict[str, object] = {}
        self.children: dict[str, "Instance"] = {}

    def execute(self, ctx: _Ctx) -> None:  # user POUs are driven by the runtime
        raise NotImplementedError


class PidInstance(Instance):
    def __init__(self):
        super().__init__("PID")
        self.state = PidState()

    def execute(self, ctx: _Ctx) -> None:
        v = self.vars
        lo, hi = v["OUT_LOW"], v["OUT_HIGH"]
        if not lo < hi:
            raise Trap("R304", f"PID output limits must satisfy OUT_LOW < OUT_HIGH, got [{lo}, {hi}]")
        state = PidState(v["KP"], v["KI"], v["KD"], lo, hi,
                         self.state.integral, self.state.prev_error, self.state.first)
        if v["RESET"]:
            self.state = state.reset()
            v["OUT"] = min(max(0.0, lo), hi)
            return
        out, self.state = pid_step(state, v["SP"], v["PV"], ctx.cycle_ms)
        if not math.isfinite(out):
            raise Trap("R302", "PID output is not finite")
        v["OUT"] = out


class TimerInstance(Instance):
    def __init__(self, kind: str):
        super().__init__(kind)
        self.state = TimerState()
        self._step = ton_step if kind == "TON" else tof_step

    def execute(self, ctx: _Ctx) -> None:
        out, self.state = self._step(self.state, self.vars["IN"], ctx.now_ms, self.vars["PT"])
        self.vars["Q"], self.vars["ET"] = out.q, out.et


class TrigInstance(Instance):
    def __init__(self, kind: str):
        super().__init__(kind)
        self.state = TrigState()
        self._step = rtrig_step if kind == "R_TRIG" else ftrig_step

    def execute(self, ctx: _Ctx) -> None:
        self.vars["Q"], self.state = self._step(self.state, self.vars["CLK"], ctx.now_ms)


def _stdlib_instance(kind: str) -> Instance:
    if kind == "PID":
        inst: Instance = PidInstance()
    elif kind in ("TON", "TOF"):
        inst = TimerInstance(kind)
    else:
        inst = TrigInstance(kind)
    sig = STDLIB_FBS[kind]
    for key, (_, t) in list(sig.inputs.items()) + list(sig.outputs.items()):
        inst.vars[key] = sig.defaults.get(key, default_value(t))
    return inst


# -- arithmetic with fault checks -------------------------------------------

def _check_int(value: int, type_name: str, span) -> int:
    lo, hi = INT_RANGE[type_name]
    if not lo <= value <= hi:
        raise Trap("R302", f"{type_name} overflow: {value}", span)
    return value


def _check_real(value, span) -> float:
    if isinstance(value, complex) or not math.isfinite(value):
        raise Trap("R302" if not isinstance(value, complex) else "R304",
                   "REAL result is not a finite real number", span)
    return value


def _int_div(a: int, b: int, span) -> int:
    if b == 0:
        raise Trap("R301", "division by zero", span)
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _int_mod(a: int, b: int, span) -> int:
    if b == 0:
        raise Trap("R301", "division by zero", span)
    return a - b * _int_div(a, b, span)


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


class _Compiler:
    """Turns POU bodies into closures; one compiler (and cache) per runtime."""

    def __init__(self, table: SymbolTable):
        self.table = table
        self.bodies: dict[str, Callable] = {}

    def body(self, pou: ast.Pou) -> Callable:
        key = pou.name.upper()
        if key not in self.bodies:
            self.pou = pou
            self.bodies[key] = self.block(pou.body)
        return self.bodies[key]

    def sym(self, name: str):
        return self.table.lookup(self.pou.name, name)

    # -- statements -------------------------------------------------------

    def block(self, stmts) -> Callable:
        fns = tuple(self.stmt(s) for s in stmts)

        def run(inst, ctx):
            for f in fns:
                f(inst, ctx)
        return run

    def store(self, target, span) -> Callable:
        """Return ``set(inst, value)`` that coerces to the target's declared type."""
        sym = self.sym(target.name)
        key = target.name.upper()
        t = sym.type_name
        if t == "REAL":
            def setter(inst, value):
                inst.vars[key] = _check_real(float(value), span)
        elif t in INTEGRAL:
            def setter(inst, value):
                inst.vars[key] = _check_int(value, t, span)
        else:
            def setter(inst, value):
                inst.vars[key] = value
        return setter

    def stmt(self, s) -> Callable:
        if isinstance(s, ast.Assign):
            setter = self.store(s.target, s.span)
            value = self.expr(s.value)
            return lambda inst, ctx: setter(inst, value(inst))
        if isinstance(s, ast.If):
            branches = tuple((self.expr(b.condition), self.block(b.body)) for b in s.branches)
            else_body = self.block(s.else_body) if s.else_body is not None else None

            def run_if(inst, ctx):
                for cond, body in branches:
                    if cond(inst):
                        body(inst, ctx)
                        return
                if else_body is not None:
                    else_body(inst, ctx)
            return run_if
        if isinstance(s, ast.Case):
            selector = self.expr(s.selector)
            table: dict[int, Callable] = {}
            ranges: list[tuple[int, int, Callable]] = []
            for branch in s.branches:
                body = self.block(branch.body)
                for label in branch.labels:
                    if isinstance(label, ast.CaseRange):
                        ranges.append((label.low, label.high, body))
                    else:
                        table.setdefault(label, body)
            else_body = self.block(s.else_body) if s.else_body is not None else None

            def run_case(inst, ctx):
                v = selector(inst)
                body = table.get(v)
                if body is None:
                    for lo, hi, b in ranges:
                        if lo <= v <= hi:
                            body = b
                            break
                    else:
                        body = else_body
                if body is not None:
                    body(inst, ctx)
            return run_case
        if isinstance(s, ast.For):
            key = s.var.upper()
            t = self.sym(s.var).type_name
            lo, hi = INT_RANGE[t]
            start, stop = self.expr(s.start), self.expr(s.stop)
            step = self.expr(s.step) if s.step is not None else (lambda inst: 1)
            body = self.block(s.body)
            span = s.span

            def run_for(inst, ctx):
                v, last, inc = start(inst), stop(inst), step(inst)
                if inc == 0:
                    raise Trap("R304", "FOR step evaluated to zero", span)
                inst.vars[key] = _check_int(v, t, span)
                try:
                    while (inst.vars[key] <= last) if inc > 0 else (inst.vars[key] >= last):
                        ctx.budget -= 1
                        if ctx.budget < 0:
                            raise Trap("R303", TRAP_CODES["R303"], span)
                        body(inst, ctx)
                        nxt = inst.vars[key] + inc
                        if not lo <= nxt <= hi:
                            break
                        inst.vars[key] = nxt
                except _ExitLoop:
                    pass
            return run_for
        if isinstance(s, ast.While):
            cond = self.expr(s.condition)
            body = self.block(s.body)
            span = s.span

            def run_while(inst, ctx):
                try:
                    while cond(inst):
                        ctx.budget -= 1
                        if ctx.budget < 0:
                            raise Trap("R303", TRAP_CODES["R303"], span)
                        body(inst, ctx)
                except _ExitLoop:
                    pass
            return run_while
        if isinstance(s, ast.FbCall):
            return self.fb_call(s)
        if isinstance(s, ast.Exit):
            def run_exit(inst, ctx):
                raise _ExitLoop()
            return run_exit
        if isinstance(s, ast.Return):
            def run_return(inst, ctx):
                raise _ReturnPou()
            return run_return
        raise TypeError(f"not a statement: {s!r}")

    def fb_call(self, s: ast.FbCall) -> Callable:
        child_key = s.instance.upper()
        sig = self.table.fb(self.sym(s.instance).type_name)
        inputs = []
        copy_back = []
        for p in s.inputs:
            pkey = p.name.upper()
            value = self.expr(p.value)
            if pkey in sig.inputs:
                ptype = sig.inputs[pkey][1]
                conv = float if ptype == "REAL" else None
                inputs.append((pkey, value, conv))
            else:  # VAR_IN_OUT: copy in, copy back after the call
                inputs.append((pkey, value, None))
                copy_back.append((pkey, self.store(p.value, p.span)))
        outputs = [(o.name.upper(), self.store_any(o.target, o.span)) for o in s.outputs]
        if sig.stdlib:
            run_body = None
        else:
            callee = self.table.unit.pou(sig.name)
            saved = self.pou
            run_body = self.body(callee)
            self.pou = saved

        def run_call(inst, ctx):
            child = inst.children[child_key]
            for pkey, value, conv in inputs:
                v = value(inst)
                child.vars[pkey] = conv(v) if conv else v
            if run_body is None:
                child.execute(ctx)
            else:
                try:
                    run_body(child, ctx)
                except _ReturnPou:
                    pass
            for pkey, setter in copy_back:
                setter(inst, child.vars[pkey])
            for okey, setter in outputs:
                setter(inst, child.vars[okey])
        return run_call

    def store_any(self, target, span) -> Callable:
        if isinstance(target, ast.Member):  # rejected by the checker
            raise TypeError("cannot store into a member")
        return self.store(target, span)

    # -- expressions ------------------------------------------------------

    def type_of(self, e) -> str:
        return self.table.type_of(e)

    def expr(self, e) -> Callable:
        if isinstance(e, ast.Literal):
            value = float(e.value) if e.type_name == "REAL" else e.value
            return lambda inst: value
        if isinstance(e, ast.VarRef):
            key = e.name.upper()
            return lambda inst: inst.vars[key]
        if isinstance(e, ast.Member):
            base, member = e.base.name.upper(), e.member.upper()
            return lambda inst: inst.children[base].vars[member]
        if isinstance(e, ast.Unary):
            operand = self.expr(e.operand)
            if e.op == "NOT":
                return lambda inst: not operand(inst)
            if e.op == "+":
                return operand
            t, span = self.type_of(e), e.span
            if t in INTEGRAL:
                return lambda inst: _check_int(-operand(inst), t, span)
            return lambda inst: -operand(inst)
        if isinstance(e, ast.Binary):
            return self.binary(e)
        if isinstance(e, ast.Call):
            return self.call(e)
        raise TypeError(f"not an expression: {e!r}")

    def binary(self, e: ast.Binary) -> Callable:
        op, span = e.op, e.span
        left, right = self.expr(e.left), self.expr(e.right)
        t = self.type_of(e)
        if op == "AND":
            return lambda inst: left(inst) and right(inst)
        if op == "OR":
            return lambda inst: left(inst) or right(inst)
        if op == "XOR":
            return lambda inst: left(inst) != right(inst)
        compare = {
            "=": lambda a, b: a == b, "<>": lambda a, b: a != b,
            "<": lambda a, b: a < b, ">": lambda a, b: a > b,
            "<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b,
        }
        if op in compare:
            f = compare[op]
            return lambda inst: f(left(inst), right(inst))
        if op == "**":
            def power(inst):
                try:
                    return _check_real(float(left(inst)) ** float(right(inst)), span)
                except ZeroDivisionError:
                    raise Trap("R301", "division by zero", span) from None
                except OverflowError:
                    raise Trap("R302", "REAL overflow", span) from None
            return power
        if t in INTEGRAL:
            if op == "/":
                return lambda inst: _check_int(_int_div(left(inst), right(inst), span), t, span)
            if op == "MOD":
                return lambda inst: _int_mod(left(inst), right(inst), span)
            arith = {"+": int.__add__, "-": int.__sub__, "*": int.__mul__}[op]
            return lambda inst: _check_int(arith(left(inst), right(inst)), t, span)
        if op == "/":
            def real_div(inst):
                b = right(inst)
                if b == 0:
                    raise Trap("R301", "division by zero", span)
                return _check_real(float(left(inst)) / b, span)
            return real_div
        arith = {"+": float.__add__, "-": float.__sub__, "*": float.__mul__}[op]
        return lambda inst: _check_real(arith(float(left(inst)), float(right(inst))), span)

    def call(self, e: ast.Call) -> Callable:
        name, span = e.name.upper(), e.span
        args = tuple(self.expr(a) for a in e.args)
        t = self.type_of(e)
        if name in CONVERSIONS:
            (arg,) = args
            dst = CONVERSIONS[name][1]
            if dst == "REAL":
                return lambda inst: float(arg(inst))
            if name in ("REAL_TO_INT", "REAL_TO_DINT"):
                return lambda inst: _check_int(_round_half_away(arg(inst)), dst, span)
            if name == "TRUNC":
                return lambda inst: _check_int(int(arg(inst)), dst, span)
            if name == "BOOL_TO_INT":
                return lambda inst: int(arg(inst))
            if dst in INTEGRAL:
                return lambda inst: _check_int(arg(inst), dst, span)
            return arg  # DINT_TO_TIME
        conv = float if t == "REAL" else (lambda x: x)
        if name == "MIN":
            return lambda inst: conv(min(a(inst) for a in args))
        if name == "MAX":
            return lambda inst: conv(max(a(inst) for a in args))
        if name == "LIMIT":
            mn, x, mx = args
            return lambda inst: conv(min(max(x(inst), mn(inst)), mx(inst)))
        if name == "ABS":
            (x,) = args
            if t in INTEGRAL:
                return lambda inst: _check_int(abs(x(inst)), t, span)
            return lambda inst: abs(x(inst))
        if name == "SQRT":
            (x,) = args

            def sqrt(inst):
                v = x(inst)
                if v < 0:
                    raise Trap("R304", f"SQRT of negative value {v}", span)
                return math.sqrt(v)
            return sqrt
        raise TypeError(f"unknown function {e.name}")


@dataclass
class ScanResult:
    scan: int
    time_ms: int
    outputs: dict = field(default_factory=dict)
    changed: dict = field(default_factory=dict)
    trap: Optional[Trap] = None


class Runtime:
    """Instantiated program state: process image, FB instance states, scan counter."""

    def __init__(self, unit: ast.SourceUnit, table: SymbolTable, entry: ast.Pou, cycle_ms: int):
        if cycle_ms <= 0:
            raise ValueError("cycle_ms must be positive")
        self.unit = unit
        self.table = table
        self.entry = entry
        self.cycle_ms = cycle_ms
        self.scan_count = 0
        self.trap: Optional[Trap] = None
        self._compiler = _Compiler(table)
        self.root = self._build(entry)
        self._body = self._compiler.body(entry)
        self.spelling = {d.name.upper(): d.name for _, d in entry.decls()}
        self.types = {}
        self.sections = {}
        for section, decl in entry.decls():
            sym = table.lookup(entry.name, decl.name)
            if sym.kind == "variable":
                self.types[decl.name.upper()] = sym.type_name
                self.sections[decl.name.upper()] = (section.kind, section.constant)

    def _build(self, pou: ast.Pou) -> Instance:
        inst = Instance(pou.name)
        for _, decl in pou.decls():
            sym = self.table.lookup(pou.name, decl.name)
            key = decl.name.upper()
            if sym.kind == "fb-instance":
                if sym.type_name.upper() in STDLIB_FBS:
                    inst.children[key] = _stdlib_instance(sym.type_name.upper())
                else:
                    inst.children[key] = self._build(self.unit.pou(sym.type_name))
            elif decl.init is not None:
                self._compiler.pou = pou
                value = self._compiler.expr(decl.init)(inst)
                inst.vars[key] = float(value) if sym.type_name == "REAL" else value
            else:
                inst.vars[key] = default_value(sym.type_name)
        return inst

    @property
    def time_ms(self) -> int:
        return self.scan_count * self.cycle_ms

    @property
    def process_image(self) -> dict:
        return {self.spelling[k]: v for k, v in self.root.vars.items()}

    def outputs(self) -> dict:
        return {self.spelling[k]: self.root.vars[k] for k, (sec, _) in self.sections.items()
                if sec == "VAR_OUTPUT"}

    def resolve(self, path: str) -> tuple[Instance, str]:
        parts = path.upper().split(".")
        inst = self.root
        for part in parts[:-1]:
            if part not in inst.children:
                raise KeyError(f"unknown instance {part!r} in {path!r}")
            inst = inst.children[part]
        if parts[-1] not in inst.vars:
            raise KeyError(f"unknown variable {path!r}")
        return inst, parts[-1]

    def get(self, path: str):
        """Read any scalar by dotted path, e.g. ``Level`` or ``TC1.OUT`` (instance internals included)."""
        inst, key = self.resolve(path)
        return inst.vars[key]

    def type_of(self, path: str) -> str:
        inst, key = self.resolve(path)
        if inst is self.root:
            return self.types[key]
        value = inst.vars[key]
        if isinstance(value, bool):
            return "BOOL"
        if isinstance(value, float):
            return "REAL"
        if isinstance(value, str):
            return "STRING"
        if key in ("PT", "ET"):
            return "TIME"
        return "DINT"

    def set_inputs(self, overrides: Mapping[str, object]) -> dict:
        checked = {}
        for name, value in overrides.items():
            key = name.upper()
            if key not in self.types:
                raise OverrideError(f"unknown variable {name!r} in {self.entry.name}")
            if self.sections[key][1]:
                raise OverrideError(f"{name!r} is a constant")
            checked[key] = coerce_override(value, self.types[key], name)
        return checked


def instantiate(unit: ast.SourceUnit, entry: str, cycle_ms: int = DEFAULT_CYCLE_MS) -> Runtime:
    """Build a runtime for POU ``entry``; the unit must check without errors."""
    pou = unit.pou(entry)
    if pou is None:
        raise UnknownPouError(f"unknown POU {entry!r}")
    table, diags = check_unit(unit)
    if has_errors(diags):
        raise DiagnosticError(f"cannot instantiate {entry!r}: unit has errors", diags)
    return Runtime(unit, table, pou, cycle_ms)


def scan(rt: Runtime, inputs: Optional[Mapping[str, object]] = None) -> ScanResult:
    """Apply ``inputs``, execute the entry body once and advance the scan counter.

    A runtime fault is returned as ``ScanResult.trap``; the runtime is then
    frozen and the scan counter is not advanced.
    """
    if rt.trap is not None:
        raise FrozenRuntimeError(f"runtime is frozen by {rt.trap}")
    checked = rt.set_inputs(inputs or {})
    before = rt.outputs()
    rt.root.vars.update(checked)
    index = rt.scan_count
    ctx = _Ctx(now_ms=index * rt.cycle_ms, cycle_ms=rt.cycle_ms)
    try:
        rt._body(rt.root, ctx)
    except _ReturnPou:
        pass
    except Trap as trap:
        rt.trap = trap
        return ScanResult(index, ctx.now_ms, rt.outputs(), {}, trap)
    rt.scan_count += 1
    after = rt.outputs()
    changed = {k: v for k, v in after.items() if before.get(k) != v or type(before.get(k)) is not type(v)}
    return ScanResult(index, ctx.now_ms, after, changed)
