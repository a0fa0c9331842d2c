"""Name resolution, type checking and style lints for parsed units.

Type rules, in short:

* conditions (IF/ELSIF/WHILE) are BOOL;
* widening INT -> DINT -> REAL is implicit, narrowing never is;
* TIME takes part in assignments, timer parameters and comparisons only;
* an FB invocation binds declared inputs (``:=``) and outputs (``=>``), and
  ``inst.X`` may only read a declared output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .diagnostics import Diagnostic, SourceSpan, error, lint, sort_diagnostics
from .st import ast

ELEMENTARY = ("BOOL", "INT", "DINT", "REAL", "TIME", "STRING")
NUMERIC = ("INT", "DINT", "REAL")
INTEGRAL = ("INT", "DINT")
_RANK = {"INT": 0, "DINT": 1, "REAL": 2}
INT_RANGE = {"INT": (-(2 ** 15), 2 ** 15 - 1), "DINT": (-(2 ** 31), 2 ** 31 - 1)}
UNKNOWN = "?"  # type of an expression that already produced an error


@dataclass(frozen=True)
class FbSignature:
    name: str
    inputs: dict  # upper name -> (spelling, type)
    outputs: dict
    in_outs: dict
    stdlib: bool = False
    defaults: dict = field(default_factory=dict)  # upper name -> python value


def _sig(name, inputs, outputs, defaults=None):
    return FbSignature(name,
                       {n.upper(): (n, t) for n, t in inputs},
                       {n.upper(): (n, t) for n, t in outputs},
                       {}, True, defaults or {})


STDLIB_FBS = {
    "TON": _sig("TON", [("IN", "BOOL"), ("PT", "TIME")], [("Q", "BOOL"), ("ET", "TIME")]),
    "TOF": _sig("TOF", [("IN", "BOOL"), ("PT", "TIME")], [("Q", "BOOL"), ("ET", "TIME")]),
    "R_TRIG": _sig("R_TRIG", [("CLK", "BOOL")], [("Q", "BOOL")]),
    "F_TRIG": _sig("F_TRIG", [("CLK", "BOOL")], [("Q", "BOOL")]),
    "PID": _sig(
        "PID",
        [("SP", "REAL"), ("PV", "REAL"), ("KP", "REAL"), ("KI", "REAL"), ("KD", "REAL"),
         ("OUT_LOW", "REAL"), ("OUT_HIGH", "REAL"), ("RESET", "BOOL")],
        [("OUT", "REAL")],
        {"KP": 1.0, "OUT_LOW": 0.0, "OUT_HIGH": 100.0},
    ),
}

# name -> (argument types, result); "num" means any numeric, result "widest"/"arg"
CONVERSIONS = {
    "INT_TO_REAL": ("INT", "REAL"), "DINT_TO_REAL": ("DINT", "REAL"),
    "REAL_TO_INT": ("REAL", "INT"), "REAL_TO_DINT": ("REAL", "DINT"),
    "INT_TO_DINT": ("INT", "DINT"), "DINT_TO_INT": ("DINT", "INT"),
    "TIME_TO_DINT": ("TIME", "DINT"), "DINT_TO_TIME": ("DINT", "TIME"),
    "TIME_TO_REAL": ("TIME", "REAL"), "BOOL_TO_INT": ("BOOL", "INT"),
    "TRUNC": ("REAL", "DINT"),
}
FUNCTIONS = ("MIN", "MAX", "LIMIT", "ABS", "SQRT") + tuple(CONVERSIONS)


def widest(*types: str) -> str:
    return max(types, key=_RANK.__getitem__)


def assignable(src: str, dst: str) -> bool:
    if UNKNOWN in (src, dst) or src == dst:
        return True
    return src in _RANK and dst in _RANK and _RANK[src] <= _RANK[dst]


def literal_type(lit: ast.Literal) -> str:
    if lit.type_name == "INT":
        lo, hi = INT_RANGE["INT"]
        return "INT" if lo <= lit.value <= hi else "DINT"
    return lit.type_name


@dataclass(frozen=True)
class Symbol:
    name: str
    kind: str  # "variable" | "fb-instance"
    type_name: str  # canonical: elementary upper-case or the FB's declared spelling
    section: str
    constant: bool = False
    span: Optional[SourceSpan] = None


@dataclass
class SymbolTable:
    unit: ast.SourceUnit
    scopes: dict = field(default_factory=dict)  # POU upper -> {name upper -> Symbol}
    fb_types: dict = field(default_factory=dict)  # FB upper -> FbSignature
    types: dict = field(default_factory=dict)  # id(expr) -> type, kept valid by holding `unit`

    def lookup(self, pou: str, name: str) -> Optional[Symbol]:
        return self.scopes.get(pou.upper(), {}).get(name.upper())

    def fb(self, type_name: str) -> Optional[FbSignature]:
        return self.fb_types.get(type_name.upper())

    def type_of(self, expr) -> str:
        return self.types.get(id(expr), UNKNOWN)


def _fb_signature(pou: ast.Pou) -> FbSignature:
    groups = {"VAR_INPUT": {}, "VAR_OUTPUT": {}, "VAR_IN_OUT": {}}
    for section, decl in pou.decls():
        if section.kind in groups:
            t = decl.type_name.upper() if decl.type_name.upper() in ELEMENTARY else decl.type_name
            groups[section.kind][decl.name.upper()] = (decl.name, t)
    return FbSignature(pou.name, groups["VAR_INPUT"], groups["VAR_OUTPUT"], groups["VAR_IN_OUT"])


class Checker:
    def __init__(self, unit: ast.SourceUnit):
        self.unit = unit
        self.table = SymbolTable(unit)
        self.diags: list[Diagnostic] = []
        self.table.fb_types.update(STDLIB_FBS)
        for pou in unit.pous:
            if pou.kind == "FUNCTION_BLOCK":
                self.table.fb_types[pou.name.upper()] = _fb_signature(pou)
        self.pou: Optional[ast.Pou] = None
        self.loop_depth = 0

    def err(self, code: str, message: str, span: SourceSpan) -> None:
        self.diags.append(error(code, message, span))

    # -- declarations -----------------------------------------------------

    def run(self) -> tuple[SymbolTable, list[Diagnostic]]:
        for pou in self.unit.pous:
            self.declare(pou)
        self.check_recursion()
        for pou in self.unit.pous:
            self.pou = pou
            self.loop_depth = 0
            self.block(pou.body)
        return self.table, sort_diagnostics(self.diags)

    def declare(self, pou: ast.Pou) -> None:
        scope: dict[str, Symbol] = {}
        self.table.scopes[pou.name.upper()] = scope
        for section, decl in pou.decls():
            key = decl.name.upper()
            if key in scope:
                self.err("E206", f"duplicate declaration of {decl.name!r}", decl.span)
                continue
            tname = decl.type_name.upper()
            if tname in ELEMENTARY:
                sym = Symbol(decl.name, "variable", tname, section.kind, section.constant, decl.span)
                if decl.init is not None:
                    self.check_initializer(decl, tname)
            else:
                sig = self.table.fb(decl.type_name)
                if sig is None:
                    self.err("E204", f"unknown FB type {decl.type_name!r}", decl.span)
                    sym = Symbol(decl.name, "variable", UNKNOWN, section.kind, section.constant, decl.span)
                else:
                    sym = Symbol(decl.name, "fb-instance", sig.name, section.kind, False, decl.span)
                    if decl.init is not None:
                        self.err("E202", f"FB instance {decl.name!r} cannot have an initializer", decl.span)
            scope[key] = sym

    def check_initializer(self, decl: ast.VarDecl, tname: str) -> None:
        for node in ast.walk(decl.init):
            if isinstance(node, (ast.VarRef, ast.Member, ast.Call)):
                self.err("E202", f"initializer of {decl.name!r} must be a constant expression", decl.span)
                return
        self.pou = None
        t = self.expr(decl.init)
        if not assignable(t, tname):
            self.err("E202", f"cannot initialize {tname} variable {decl.name!r} with {t}", decl.span)

    def check_recursion(self) -> None:
        uses = {}
        for pou in self.unit.pous:
            uses[pou.name.upper()] = {decl.type_name.upper() for _, decl in pou.decls()
                                      if decl.type_name.upper() not in ELEMENTARY}
        state: dict[str, int] = {}

        def visit(name: str, stack: list[str]) -> None:
            state[name] = 1
            for dep in sorted(uses.get(name, ())):
                if state.get(dep) == 1:
                    pou = self.unit.pou(name)
                    self.err("E210", f"recursive FB instantiation: {' -> '.join(stack + [dep])}", pou.span)
                elif dep in uses and dep not in state:
                    visit(dep, stack + [dep])
            state[name] = 2

        for name in uses:
            if name not in state:
                visit(name, [name])

    # -- statements -------------------------------------------------------

    def lookup(self, name: str) -> Optional[Symbol]:
        if self.pou is None:
            return None
        return self.table.lookup(self.pou.name, name)

    def block(self, stmts) -> None:
        for s in stmts:
            self.stmt(s)

    def condition(self, expr) -> None:
        t = self.expr(expr)
        if t not in ("BOOL", UNKNOWN):
            self.err("E203", f"condition must be BOOL, found {t}", expr.span)

    def stmt(self, s) -> None:
        if isinstance(s, ast.Assign):
            target_t = self.lvalue(s.target, s.span)
            value_t = self.expr(s.value)
            self.require_assignable(value_t, target_t, s.value.span)
        elif isinstance(s, ast.If):
            for branch in s.branches:
                self.condition(branch.condition)
                self.block(branch.body)
            if s.else_body is not None:
                self.block(s.else_body)
        elif isinstance(s, ast.Case):
            t = self.expr(s.selector)
            if t not in INTEGRAL and t != UNKNOWN:
                self.err("E212", f"CASE selector must be INT or DINT, found {t}", s.selector.span)
            seen: set[int] = set()
            for branch in s.branches:
                for label in branch.labels:
                    values = (range(label.low, label.high + 1) if isinstance(label, ast.CaseRange)
                              else (label,))
                    if isinstance(label, ast.CaseRange) and label.low > label.high:
                        self.err("E212", f"empty case range {label.low}..{label.high}", s.span)
                    if seen.intersection(values):
                        self.err("E212", f"duplicate case label {label!r}", s.span)
                    seen.update(values)
                self.block(branch.body)
            if s.else_body is not None:
                self.block(s.else_body)
        elif isinstance(s, ast.For):
            sym = self.lookup(s.var)
            var_t = UNKNOWN
            if sym is None:
                self.err("E201", f"undeclared identifier {s.var!r}", s.span)
            elif sym.kind != "variable" or sym.type_name not in INTEGRAL:
                self.err("E212", f"FOR variable {s.var!r} must be INT or DINT", s.span)
            else:
                var_t = sym.type_name
                if sym.constant:
                    self.err("E211", f"cannot assign to constant {s.var!r}", s.span)
            for part in (s.start, s.stop, s.step):
                if part is not None:
                    t = self.expr(part)
                    if t not in INTEGRAL and t != UNKNOWN:
                        self.err("E212", f"FOR bounds must be integral, found {t}", part.span)
                    else:
                        self.require_assignable(t, var_t, part.span)
            if isinstance(s.step, ast.Literal) and s.step.value == 0:
                self.err("E212", "FOR step must not be zero", s.step.span)
            self.loop_depth += 1
            self.block(s.body)
            self.loop_depth -= 1
        elif isinstance(s, ast.While):
            self.condition(s.condition)
            self.loop_depth += 1
            self.block(s.body)
            self.loop_depth -= 1
        elif isinstance(s, ast.FbCall):
            self.fb_call(s)
        elif isinstance(s, ast.Exit):
            if self.loop_depth == 0:
                self.err("E213", "EXIT outside of a loop", s.span)
        elif isinstance(s, ast.Return):
            pass

    def require_assignable(self, src: str, dst: str, span: SourceSpan) -> None:
        if assignable(src, dst):
            return
        if src == "REAL" and dst in INTEGRAL:
            self.err("E202", f"implicit conversion from REAL to {dst} is not allowed", span)
        else:
            self.err("E202", f"type mismatch: cannot assign {src} to {dst}", span)

    def lvalue(self, target, span: SourceSpan) -> str:
        if isinstance(target, ast.Member):
            sym = self.lookup(target.base.name)
            if sym is None:
                self.err("E201", f"undeclared identifier {target.base.name!r}", target.span)
                return UNKNOWN
            sig = self.table.fb(sym.type_name) if sym.kind == "fb-instance" else None
            if sig is None:
                self.err("E209", f"{target.base.name!r} is not an FB instance", target.span)
                return UNKNOWN
            key = target.member.upper()
            if key in sig.inputs or key in sig.in_outs:
                self.err("E205", f"cannot write to VAR_INPUT {target.member!r} of another instance; "
                                 f"pass it in the call of {target.base.name!r}", target.span)
            else:
                self.err("E205", f"cannot write to {target.base.name}.{target.member} of another instance",
                         target.span)
            return UNKNOWN
        sym = self.lookup(target.name)
        if sym is None:
            self.err("E201", f"undeclared identifier {target.name!r}", target.span)
            return UNKNOWN
        if sym.kind == "fb-instance":
            self.err("E202", f"cannot assign to FB instance {target.name!r}", target.span)
            return UNKNOWN
        if sym.constant:
            self.err("E211", f"cannot assign to constant {target.name!r}", target.span)
        return sym.type_name

    def fb_call(self, s: ast.FbCall) -> None:
        sym = self.lookup(s.instance)
        if sym is None:
            self.err("E201", f"undeclared identifier {s.instance!r}", s.span)
            sig = None
        elif sym.kind != "fb-instance":
            self.err("E210", f"{s.instance!r} is not an FB instance and cannot be invoked", s.span)
            sig = None
        else:
            sig = self.table.fb(sym.type_name)
        seen: set[str] = set()
        for p in s.inputs:
            t = self.expr(p.value)
            if sig is None:
                continue
            key = p.name.upper()
            if key in seen:
                self.err("E208", f"parameter {p.name!r} bound twice", p.span)
            seen.add(key)
            if key in sig.inputs:
                self.require_assignable(t, sig.inputs[key][1], p.value.span)
            elif key in sig.in_outs:
                if not isinstance(p.value, ast.VarRef):
                    self.err("E210", f"VAR_IN_OUT {p.name!r} needs a variable", p.value.span)
                elif t != sig.in_outs[key][1] and UNKNOWN not in (t,):
                    self.err("E202", f"VAR_IN_OUT {p.name!r} expects {sig.in_outs[key][1]}, found {t}",
                             p.value.span)
            else:
                self.err("E208", f"{sig.name} has no input {p.name!r}", p.span)
        if sig is not None:
            missing = [n for k, (n, _) in sig.in_outs.items() if k not in seen]
            for name in missing:
                self.err("E210", f"VAR_IN_OUT {name!r} of {s.instance} must be bound", s.span)
        for o in s.outputs:
            target_t = self.lvalue(o.target, o.span)
            if sig is None:
                continue
            key = o.name.upper()
            if key not in sig.outputs:
                self.err("E208", f"{sig.name} has no output {o.name!r}", o.span)
                continue
            self.require_assignable(sig.outputs[key][1], target_t, o.span)

    # -- expressions ------------------------------------------------------

    def expr(self, e) -> str:
        t = self._expr(e)
        self.table.types[id(e)] = t
        return t

    def _expr(self, e) -> str:
        if isinstance(e, ast.Literal):
            return literal_type(e)
        if isinstance(e, ast.VarRef):
            sym = self.lookup(e.name)
            if sym is None:
                self.err("E201", f"undeclared identifier {e.name!r}", e.span)
                return UNKNOWN
            if sym.kind == "fb-instance":
                self.err("E202", f"FB instance {e.name!r} used as a value", e.span)
                return UNKNOWN
            return sym.type_name
        if isinstance(e, ast.Member):
            sym = self.lookup(e.base.name)
            if sym is None:
                self.err("E201", f"undeclared identifier {e.base.name!r}", e.base.span)
                return UNKNOWN
            sig = self.table.fb(sym.type_name) if sym.kind == "fb-instance" else None
            if sig is None:
                self.err("E209", f"{e.base.name!r} is not an FB instance", e.span)
                return UNKNOWN
            key = e.member.upper()
            if key in sig.outputs:
                return sig.outputs[key][1]
            if key in sig.inputs or key in sig.in_outs:
                self.err("E209", f"cannot read input {e.member!r} of instance {e.base.name!r}; "
                                 "only outputs are readable", e.span)
            else:
                self.err("E209", f"{sig.name} has no output {e.member!r}", e.span)
            return UNKNOWN
        if isinstance(e, ast.Unary):
            t = self.expr(e.operand)
            if t == UNKNOWN:
                return UNKNOWN
            if e.op == "NOT":
                if t != "BOOL":
                    self.err("E202", f"NOT needs a BOOL operand, found {t}", e.span)
                    return UNKNOWN
                return "BOOL"
            if t not in NUMERIC:
                self.err("E202", f"unary {e.op} needs a numeric operand, found {t}", e.span)
                return UNKNOWN
            return t
        if isinstance(e, ast.Binary):
            return self.binary(e)
        if isinstance(e, ast.Call):
            return self.call(e)
        raise TypeError(f"not an expression: {e!r}")

    def binary(self, e: ast.Binary) -> str:
        lt, rt = self.expr(e.left), self.expr(e.right)
        op = e.op
        if UNKNOWN in (lt, rt):
            return "BOOL" if op in ("=", "<>", "<", ">", "<=", ">=", "AND", "OR", "XOR") else UNKNOWN
        if op in ("AND", "OR", "XOR"):
            if lt != "BOOL" or rt != "BOOL":
                self.err("E202", f"{op} needs BOOL operands, found {lt} and {rt}", e.span)
            return "BOOL"
        if op in ("=", "<>", "<", ">", "<=", ">="):
            if lt in NUMERIC and rt in NUMERIC:
                return "BOOL"
            if lt == rt and (lt in ("TIME", "STRING") or (lt == "BOOL" and op in ("=", "<>"))):
                return "BOOL"
            self.err("E202", f"cannot compare {lt} with {rt}", e.span)
            return "BOOL"
        if "TIME" in (lt, rt):
            self.err("E202", f"operator {op} not allowed on TIME; TIME values are limited to "
                             "timer parameters, assignments and comparisons", e.span)
            return UNKNOWN
        if lt not in NUMERIC or rt not in NUMERIC:
            self.err("E202", f"operator {op} needs numeric operands, found {lt} and {rt}", e.span)
            return UNKNOWN
        if op == "MOD" and (lt not in INTEGRAL or rt not in INTEGRAL):
            self.err("E202", f"MOD needs integral operands, found {lt} and {rt}", e.span)
            return UNKNOWN
        if op == "**":
            return "REAL"
        return widest(lt, rt)

    def call(self, e: ast.Call) -> str:
        name = e.name.upper()
        types = [self.expr(a) for a in e.args]
        if name not in FUNCTIONS:
            if self.table.fb(e.name) is not None or (self.lookup(e.name) and self.lookup(e.name).kind == "fb-instance"):
                self.err("E210", f"FB {e.name!r} cannot be called inside an expression", e.span)
            else:
                self.err("E210", f"unknown function {e.name!r}", e.span)
            return UNKNOWN
        if UNKNOWN in types:
            return UNKNOWN
        if name in CONVERSIONS:
            src, dst = CONVERSIONS[name]
            if len(types) != 1:
                self.err("E210", f"{name} takes 1 argument, got {len(types)}", e.span)
            elif not assignable(types[0], src):
                self.err("E202", f"{name} expects {src}, found {types[0]}", e.args[0].span)
            return dst
        arity = {"ABS": (1, 1), "SQRT": (1, 1), "LIMIT": (3, 3), "MIN": (2, 99), "MAX": (2, 99)}[name]
        if not arity[0] <= len(types) <= arity[1]:
            self.err("E210", f"{name} takes {arity[0]}" + ("" if arity[0] == arity[1] else "+")
                     + f" arguments, got {len(types)}", e.span)
            return UNKNOWN
        bad = [t for t in types if t not in NUMERIC]
        if bad:
            self.err("E202", f"{name} needs numeric arguments, found {bad[0]}", e.span)
            return UNKNOWN
        if name == "SQRT":
            return "REAL"
        return widest(*types)


def check_unit(unit: ast.SourceUnit) -> tuple[SymbolTable, list[Diagnostic]]:
    """Resolve and type-check ``unit``; diagnostics come back ordered by span."""
    return Checker(unit).run()


def lint_style(unit: ast.SourceUnit) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for c in unit.comments():
        if c.slashes:
            diags.append(lint("L001", "comment notation not supported by target importer; "
                                      "use (* ... *) instead of //", c.span))
    declared = {p.name.upper() for p in unit.pous if p.kind == "FUNCTION_BLOCK"}
    for pou in unit.pous:
        used: set[str] = set()
        for node in ast.walk(pou.body):
            if isinstance(node, ast.VarRef):
                used.add(node.name.upper())
            elif isinstance(node, ast.FbCall):
                used.add(node.instance.upper())
            elif isinstance(node, ast.For):
                used.add(node.var.upper())
        for section, decl in pou.decls():
            tname = decl.type_name.upper()
            if tname not in ELEMENTARY and tname not in STDLIB_FBS and tname not in declared:
                diags.append(lint("L002", f"not self-contained: FB type {decl.type_name!r} is neither "
                                          "declared in this unit nor a standard FB", decl.span))
            if section.kind == "VAR" and decl.name.upper() not in used:
                diags.append(lint("L003", f"unused variable {decl.name!r}", decl.span))
    return sort_diagnostics(diags)


def check_source(source: str) -> tuple[Optional[ast.SourceUnit], list[Diagnostic]]:
    """Parse, check and lint ``source`` in one go; the unit is None when parsing failed."""
    from .diagnostics import has_errors
    from .st.parser import parse_text

    unit, diags = parse_text(source)
    if has_errors(diags):
        return None, sort_diagnostics(diags)
    _, sema = check_unit(unit)
    return unit, sort_diagnostics(diags + sema + lint_style(unit))
