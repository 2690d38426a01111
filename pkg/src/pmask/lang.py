"""A small PRISM-style guarded-command language.

Supported: ``const`` declarations, a ``faults a, b;`` header, one
``module ... endmodule`` block with bounded integer variables and guarded
commands with probabilistic updates.  See ``docs/grammar.md``.
"""
from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .core import Dist, Pts, Transition

__all__ = ["ModelError", "ModelFile", "ModuleAst", "Command", "parse", "parse_file", "elaborate", "load"]


class ModelError(Exception):
    def __init__(self, msg, line=None, col=None):
        self.msg = msg
        self.line = line
        self.col = col
        loc = f"{line}:{col}: " if line is not None else ""
        super().__init__(loc + msg)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+) |
    (?P<nl>\n) |
    (?P<comment>//[^\n]*) |
    (?P<num>\d+(?:\.\d+)?) |
    (?P<id>[A-Za-z_][A-Za-z_0-9]*) |
    (?P<op>->|\.\.|<=|>=|!=|[=<>&|!+\-*/?:;,()\[\]'])
    """,
    re.VERBOSE,
)

KEYWORDS = {"const", "module", "endmodule", "init", "true", "false", "faults",
            "mdp", "dtmc", "int", "double", "rat", "bool"}
FUNCTIONS = {"min", "max", "floor", "ceil"}


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ModelError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - line_start + 1))
    return toks


# Expressions are nested tuples: ("num", Fraction) | ("bool", b) | ("id", name)
# | ("un", op, e) | ("bin", op, a, b) | ("ite", c, a, b) | ("call", f, [args]).
# Every node carries its source position as the last element.


@dataclass
class Command:
    action: str
    guard: tuple
    updates: list[tuple[tuple, list[tuple[str, tuple]]]]
    line: int = 0


@dataclass
class ModuleAst:
    name: str
    variables: list[tuple[str, int, int, int]]
    commands: list[Command]


@dataclass
class ModelFile:
    constants: dict[str, Fraction]
    module: ModuleAst
    faults: set[str] = field(default_factory=set)
    overridden: set[str] = field(default_factory=set)

    def actions(self) -> list[str]:
        seen = []
        for c in self.module.commands:
            if c.action not in seen:
                seen.append(c.action)
        return seen


class _Parser:
    def __init__(self, text: str, overrides: dict[str, Fraction], lenient: bool = False):
        self.toks = tokenize(text)
        self.i = 0
        self.overrides = overrides
        self.lenient = lenient
        self.consts: dict[str, Fraction] = {}
        self.pending_consts: list[tuple[str, tuple | None, Tok]] = []

    # token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise ModelError(msg, tok.line, tok.col)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("op", "id"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok.text or "end of file"
            self.error(f"expected {text!r}, found {found!r}")

    def ident(self, what="identifier"):
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.error(f"expected {what}, found {t.text or 'end of file'!r}")
        self.i += 1
        return t.text

    # top level
    def parse(self) -> ModelFile:
        module = None
        faults: set[str] = set()
        while self.tok.kind != "eof":
            t = self.tok
            if self.accept("mdp") or self.accept("dtmc"):
                continue
            if self.accept("const"):
                self.const_decl(t)
            elif self.accept("faults"):
                faults.add(self.ident("action name"))
                while self.accept(","):
                    faults.add(self.ident("action name"))
                self.expect(";")
            elif self.accept("module"):
                if module is not None:
                    self.error("only one module per file is supported", t)
                self.resolve_constants()
                module = self.module()
            else:
                self.error(f"unexpected {t.text!r}")
        if module is None:
            raise ModelError("no module found")
        for name in self.overrides:
            if name not in self.consts and not self.lenient:
                raise ModelError(f"override for undeclared constant {name}")
        used = {n for n in self.overrides if n in self.consts}
        return ModelFile(dict(self.consts), module, faults, used)

    def const_decl(self, start):
        self.accept("int") or self.accept("double") or self.accept("rat") or self.accept("bool")
        name_tok = self.tok
        name = self.ident("constant name")
        if name in self.consts or any(n == name for n, _, _ in self.pending_consts):
            self.error(f"duplicate constant {name}", name_tok)
        expr = None
        if self.accept("="):
            expr = self.expr()
        self.expect(";")
        self.pending_consts.append((name, expr, name_tok))

    def resolve_constants(self):
        for name, expr, tok in self.pending_consts:
            if name in self.overrides:
                self.consts[name] = self.overrides[name]
            elif expr is None:
                self.error(f"constant {name} has no value (supply an override)", tok)
            else:
                self.consts[name] = self.const_value(expr)
        self.pending_consts = []

    def const_value(self, expr):
        self.check_idents(expr, set(), "constant expression")
        v = evaluate(expr, self.consts)
        if isinstance(v, bool):
            self.error("boolean constants are not supported", _pos_tok(expr))
        return v

    def int_const(self, expr, what):
        v = self.const_value(expr)
        if v.denominator != 1:
            self.error(f"{what} must be an integer, got {v}", _pos_tok(expr))
        return int(v)

    def module(self) -> ModuleAst:
        name = self.ident("module name")
        variables = []
        names = set()
        while self.tok.kind == "id" and self.tok.text not in KEYWORDS and self.toks[self.i + 1].text == ":":
            vt = self.tok
            vname = self.ident()
            if vname in names:
                self.error(f"duplicate variable {vname}", vt)
            if vname in self.consts:
                self.error(f"variable {vname} shadows a constant", vt)
            self.expect(":")
            self.expect("[")
            lo = self.int_const(self.expr(), "lower bound")
            self.expect("..")
            hi = self.int_const(self.expr(), "upper bound")
            self.expect("]")
            init = lo
            if self.accept("init"):
                init = self.int_const(self.expr(), "initial value")
            self.expect(";")
            if lo > hi:
                self.error(f"empty range for {vname}", vt)
            if not lo <= init <= hi:
                self.error(f"initial value {init} of {vname} outside [{lo}..{hi}]", vt)
            names.add(vname)
            variables.append((vname, lo, hi, init))
        commands = []
        while not self.accept("endmodule"):
            if self.tok.kind == "eof":
                self.error("missing endmodule")
            commands.append(self.command(names))
        return ModuleAst(name, variables, commands)

    def command(self, varnames) -> Command:
        start = self.tok
        self.expect("[")
        action = ""
        if self.tok.text != "]":
            action = self.ident("action name")
        self.expect("]")
        guard = self.expr()
        self.check_idents(guard, varnames, "guard")
        self.expect("->")
        updates = []
        if self._at_prob_branch():
            while True:
                ptok = self.tok
                prob = self.expr()
                self.check_idents(prob, set(), "probability expression", varnames)
                self.expect(":")
                updates.append((prob, self.assignments(varnames), ptok))
                if not self.accept("+"):
                    break
        else:
            one = ("num", Fraction(1), (start.line, start.col))
            updates.append((one, self.assignments(varnames), start))
        self.expect(";")
        if not action:
            self.error("commands must carry an action label", start)
        # probabilities are constant, so they are checked here once
        total = Fraction(0)
        for prob, _, ptok in updates:
            p = evaluate(prob, self.consts)
            if isinstance(p, bool) or not 0 <= p <= 1:
                self.error(f"probability {p} outside [0,1]", ptok)
            total += p
        if total != 1:
            self.error(f"probabilities sum to {total}", start)
        return Command(action, guard, [(p, a) for p, a, _ in updates], start.line)

    def _at_prob_branch(self):
        t = self.tok
        if t.text == "true":
            return False
        if t.text == "(":
            nxt, nxt2 = self.toks[self.i + 1], self.toks[self.i + 2]
            if nxt.kind == "id" and nxt2.text == "'":
                return False
        return True

    def assignments(self, varnames):
        if self.accept("true"):
            return []
        out = []
        seen = set()
        while True:
            self.expect("(")
            vt = self.tok
            name = self.ident("variable name")
            if name not in varnames:
                self.error(f"unknown variable {name}", vt)
            if name in seen:
                self.error(f"variable {name} assigned twice", vt)
            seen.add(name)
            self.expect("'")
            self.expect("=")
            e = self.expr()
            self.check_idents(e, varnames, "update")
            self.expect(")")
            out.append((name, e))
            if not self.accept("&"):
                return out

    def check_idents(self, expr, varnames, what, forbidden_vars=()):
        for name, pos in _idents(expr):
            if name in self.consts:
                continue
            if name in varnames:
                continue
            tok = Tok("id", name, *pos)
            if name in forbidden_vars:
                self.error(f"{what} not constant (uses variable {name})", tok)
            self.error(f"unknown variable {name}" if what != "constant expression"
                       else f"unknown constant {name}", tok)

    # expressions, lowest precedence first
    def expr(self):
        return self.ite()

    def ite(self):
        c = self.or_()
        if self.tok.text == "?":
            pos = self._pos()
            self.i += 1
            a = self.ite()
            self.expect(":")
            b = self.ite()
            return ("ite", c, a, b, pos)
        return c

    def or_(self):
        a = self.and_()
        while self.tok.text == "|":
            pos = self._pos()
            self.i += 1
            a = ("bin", "|", a, self.and_(), pos)
        return a

    def and_(self):
        a = self.not_()
        while self.tok.text == "&":
            pos = self._pos()
            self.i += 1
            a = ("bin", "&", a, self.not_(), pos)
        return a

    def not_(self):
        if self.tok.text == "!":
            pos = self._pos()
            self.i += 1
            return ("un", "!", self.not_(), pos)
        return self.rel()

    def rel(self):
        a = self.add()
        if self.tok.text in ("=", "!=", "<", "<=", ">", ">="):
            pos = self._pos()
            op = self.tok.text
            self.i += 1
            a = ("bin", op, a, self.add(), pos)
        return a

    def add(self):
        a = self.mul()
        while self.tok.text in ("+", "-"):
            pos = self._pos()
            op = self.tok.text
            self.i += 1
            a = ("bin", op, a, self.mul(), pos)
        return a

    def mul(self):
        a = self.unary()
        while self.tok.text in ("*", "/"):
            pos = self._pos()
            op = self.tok.text
            self.i += 1
            a = ("bin", op, a, self.unary(), pos)
        return a

    def unary(self):
        if self.tok.text == "-":
            pos = self._pos()
            self.i += 1
            return ("un", "-", self.unary(), pos)
        return self.atom()

    def atom(self):
        t = self.tok
        pos = self._pos()
        if t.kind == "num":
            self.i += 1
            return ("num", Fraction(t.text), pos)
        if t.text in ("true", "false"):
            self.i += 1
            return ("bool", t.text == "true", pos)
        if t.text == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id" and t.text in FUNCTIONS and self.toks[self.i + 1].text == "(":
            self.i += 2
            args = [self.expr()]
            while self.accept(","):
                args.append(self.expr())
            self.expect(")")
            return ("call", t.text, args, pos)
        if t.kind == "id" and t.text not in KEYWORDS:
            self.i += 1
            return ("id", t.text, pos)
        self.error(f"unexpected {t.text or 'end of file'!r} in expression")

    def _pos(self):
        return (self.tok.line, self.tok.col)


def _pos_tok(expr):
    line, col = expr[-1]
    return Tok("", "", line, col)


def _idents(expr):
    tag = expr[0]
    if tag == "id":
        yield expr[1], expr[2]
    elif tag == "un":
        yield from _idents(expr[2])
    elif tag == "bin":
        yield from _idents(expr[2])
        yield from _idents(expr[3])
    elif tag == "ite":
        for sub in expr[1:4]:
            yield from _idents(sub)
    elif tag == "call":
        for a in expr[2]:
            yield from _idents(a)


def _num(v, expr):
    if isinstance(v, bool):
        raise ModelError("expected a number, got a boolean", *expr[-1])
    return v


def _bool(v, expr):
    if not isinstance(v, bool):
        raise ModelError("expected a boolean, got a number", *expr[-1])
    return v


def evaluate(expr, env):
    tag = expr[0]
    if tag == "num" or tag == "bool":
        return expr[1]
    if tag == "id":
        v = env[expr[1]]
        return v if isinstance(v, (bool, Fraction)) else Fraction(v)
    if tag == "un":
        v = evaluate(expr[2], env)
        return (not _bool(v, expr)) if expr[1] == "!" else -_num(v, expr)
    if tag == "ite":
        return evaluate(expr[2], env) if _bool(evaluate(expr[1], env), expr) else evaluate(expr[3], env)
    if tag == "call":
        args = [_num(evaluate(a, env), expr) for a in expr[2]]
        f = expr[1]
        if f == "min":
            return min(args)
        if f == "max":
            return max(args)
        if len(args) != 1:
            raise ModelError(f"{f} takes one argument", *expr[-1])
        return Fraction(math.floor(args[0]) if f == "floor" else math.ceil(args[0]))
    op, a, b = expr[1], evaluate(expr[2], env), None
    if op == "&":
        return _bool(a, expr) and _bool(evaluate(expr[3], env), expr)
    if op == "|":
        return _bool(a, expr) or _bool(evaluate(expr[3], env), expr)
    b = evaluate(expr[3], env)
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    a, b = _num(a, expr), _num(b, expr)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise ModelError("division by zero", *expr[-1])
        return a / b
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def _compile(expr, consts, varindex) -> Callable:
    """Turn an expression into a closure over a valuation tuple."""
    tag = expr[0]
    if tag in ("num", "bool"):
        v = expr[1]
        return lambda val: v
    if tag == "id":
        name = expr[1]
        if name in varindex:
            k = varindex[name]
            return lambda val: val[k]
        v = consts[name]
        return lambda val: v
    if tag == "un":
        f = _compile(expr[2], consts, varindex)
        if expr[1] == "!":
            return lambda val: not f(val)
        return lambda val: -f(val)
    if tag == "ite":
        c, a, b = (_compile(e, consts, varindex) for e in expr[1:4])
        return lambda val: a(val) if c(val) else b(val)
    if tag == "call":
        fs = [_compile(a, consts, varindex) for a in expr[2]]
        name = expr[1]
        if name == "min":
            return lambda val: min(f(val) for f in fs)
        if name == "max":
            return lambda val: max(f(val) for f in fs)
        g = fs[0]
        if name == "floor":
            return lambda val: math.floor(g(val))
        return lambda val: math.ceil(g(val))
    op = expr[1]
    a = _compile(expr[2], consts, varindex)
    b = _compile(expr[3], consts, varindex)
    if op == "&":
        return lambda val: a(val) and b(val)
    if op == "|":
        return lambda val: a(val) or b(val)
    if op == "/":
        return lambda val: Fraction(a(val)) / b(val)
    import operator as _op
    fn = {"=": _op.eq, "!=": _op.ne, "<": _op.lt, "<=": _op.le, ">": _op.gt, ">=": _op.ge,
          "+": _op.add, "-": _op.sub, "*": _op.mul}[op]
    return lambda val: fn(a(val), b(val))


def _to_rat(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def parse(text: str, constants: dict | None = None, lenient: bool = False) -> ModelFile:
    """Parse model text; ``constants`` overrides ``const`` declarations.

    With ``lenient`` set, overrides for constants the file does not declare
    are ignored instead of rejected (``ModelFile.overridden`` lists the used ones).
    """
    overrides = {k: _to_rat(v) if not isinstance(v, str) else Fraction(v) for k, v in (constants or {}).items()}
    return _Parser(text, overrides, lenient).parse()


def parse_file(path, constants: dict | None = None, lenient: bool = False) -> ModelFile:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), constants, lenient)


def elaborate(model: ModelFile, fault_actions=None) -> Pts:
    """Enumerate reachable valuations breadth-first and build the PTS.

    State ids follow discovery order from the initial valuation.
    """
    mod = model.module
    faults = set(model.faults if fault_actions is None else fault_actions)
    actions = model.actions()
    unknown = faults - set(actions)
    if unknown:
        raise ModelError(f"fault action(s) {sorted(unknown)} do not occur in module {mod.name}")
    varindex = {name: k for k, (name, *_rest) in enumerate(mod.variables)}
    bounds = [(lo, hi) for _, lo, hi, _ in mod.variables]
    compiled = []
    for cmd in mod.commands:
        guard = _compile(cmd.guard, model.constants, varindex)
        branches = []
        for prob, assigns in cmd.updates:
            p = evaluate(prob, model.constants)
            if p == 0:
                continue
            ups = [(varindex[name], name, _compile(e, model.constants, varindex)) for name, e in assigns]
            branches.append((p, ups))
        compiled.append((cmd, actions.index(cmd.action), guard, branches))

    init = tuple(v[3] for v in mod.variables)
    index = {init: 0}
    order = [init]
    queue = deque([init])
    transitions = []
    while queue:
        val = queue.popleft()
        src = index[val]
        enabled = False
        for cmd, act, guard, branches in compiled:
            g = guard(val)
            if not isinstance(g, bool):
                raise ModelError(f"guard of [{cmd.action}] is not boolean", cmd.line, None)
            if not g:
                continue
            enabled = True
            mass: dict[int, Fraction] = {}
            for p, ups in branches:
                new = list(val)
                for k, name, f in ups:
                    x = f(val)
                    if isinstance(x, bool) or Fraction(x).denominator != 1:
                        raise ModelError(f"[{cmd.action}] assigns non-integer {x} to {name} in state {_label(mod, val)}", cmd.line, None)
                    x = int(x)
                    lo, hi = bounds[k]
                    if not lo <= x <= hi:
                        raise ModelError(
                            f"[{cmd.action}] drives {name} to {x} outside [{lo}..{hi}] in state {_label(mod, val)}",
                            cmd.line, None)
                    new[k] = x
                tgt = tuple(new)
                if tgt not in index:
                    index[tgt] = len(order)
                    order.append(tgt)
                    queue.append(tgt)
                t = index[tgt]
                mass[t] = mass.get(t, Fraction(0)) + p
            transitions.append(Transition(src, act, Dist(mass)))
        if not enabled:
            raise ModelError(f"deadlock: no command enabled in state {_label(mod, val)}")
    labels = {i: _label(mod, val) for i, val in enumerate(order)}
    fault_ids = frozenset(actions.index(a) for a in faults)
    return Pts(len(order), actions, transitions, 0, fault_ids, labels)


def _label(mod: ModuleAst, val) -> str:
    return ",".join(f"{name}={x}" for (name, *_r), x in zip(mod.variables, val))


def load(path, constants=None, faults=None, lenient: bool = False) -> Pts:
    """Parse and elaborate a model file in one go."""
    return elaborate(parse_file(path, constants, lenient), faults)


def to_model_text(pts: Pts, name: str = "M") -> str:
    """Explicit-state rendering of a PTS in the model language (one variable ``x``)."""
    lines = ["mdp", ""]
    faults = sorted(pts.fault_names())
    if faults:
        lines += [f"faults {', '.join(faults)};", ""]
    lines.append(f"module {name}")
    lines.append(f"  x : [0..{max(pts.state_count - 1, 0)}] init {pts.initial};")
    for t in pts.transitions:
        ups = " + ".join(f"{p}:(x'={s})" for s, p in t.target.items())
        lines.append(f"  [{pts.action_name(t.action)}] x={t.source} -> {ups};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"
