"""A concrete interpreter for the emitted Verilog subset.

This is a deliberately independent implementation path: it parses the
emitted `.v` text back in (it shares no code with the emitter or the term
algebra) and simulates it cycle by cycle with plain integers. Tests drive
the same stimulus through this interpreter and through the symbolic engine
specialized to constants, and require bit-exact agreement.

Supported subset: module/endmodule with ANSI ports, wire/reg declarations
(including memories), continuous assigns, `initial` constants, single-clock
`always @(posedge clk)` blocks of (guarded) non-blocking assignments, and
module instantiation with named connections.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class NetlistError(Exception):
    pass


_TOKEN = re.compile(
    r"\s*(?:(?P<comment>//[^\n]*)|(?P<sized>\d+'[bdh][0-9a-fA-F_xzXZ]+)|(?P<num>\d+)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_$]*)|(?P<op><=|==|<<|>>|@|[(){}\[\]:;,.=?~&|^<>+\-*]))"
)


def _tokenize(text: str) -> list[str]:
    out: list[str] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise NetlistError(f"cannot tokenize near {text[pos:pos + 24]!r}")
        pos = m.end()
        if m.lastgroup == "comment":
            continue
        out.append(m.group(m.lastgroup))
    return out


def _const_value(token: str) -> tuple[int, int]:
    width_s, rest = token.split("'", 1)
    base, digits = rest[0].lower(), rest[1:].replace("_", "")
    radix = {"b": 2, "d": 10, "h": 16}[base]
    return int(width_s), int(digits, radix)


# -- module-level AST ----------------------------------------------------------


@dataclass
class _Port:
    direction: str
    name: str
    width: int


@dataclass
class _NbAssign:
    guard: object | None
    target: str
    index: object | None
    rhs: object


@dataclass
class _ModuleAst:
    name: str
    ports: list[_Port] = field(default_factory=list)
    nets: dict[str, int] = field(default_factory=dict)  # name -> width
    arrays: dict[str, tuple[int, int]] = field(default_factory=dict)  # name -> (width, depth)
    regs: set[str] = field(default_factory=set)
    assigns: list[tuple[str, object]] = field(default_factory=list)
    inits: list[tuple[str, int | None, int]] = field(default_factory=list)
    clocked: list[_NbAssign] = field(default_factory=list)
    children: list[tuple[str, str, dict[str, str]]] = field(default_factory=list)


class _Parser:
    def __init__(self, tokens: list[str]):
        self.toks = tokens
        self.pos = 0

    def peek(self) -> str:
        return self.toks[self.pos] if self.pos < len(self.toks) else "<eof>"

    def next(self) -> str:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, want: str) -> str:
        tok = self.next()
        if tok != want:
            raise NetlistError(f"expected {want!r}, found {tok!r}")
        return tok

    def accept(self, want: str) -> bool:
        if self.peek() == want:
            self.pos += 1
            return True
        return False

    # declarations ---------------------------------------------------------------

    def parse_modules(self) -> dict[str, _ModuleAst]:
        mods: dict[str, _ModuleAst] = {}
        while self.peek() != "<eof>":
            mod = self.parse_module()
            mods[mod.name] = mod
        return mods

    def parse_module(self) -> _ModuleAst:
        self.expect("module")
        mod = _ModuleAst(name=self.next())
        self.expect("(")
        while not self.accept(")"):
            direction = self.next()
            if direction not in ("input", "output"):
                raise NetlistError(f"unsupported port direction {direction!r}")
            kind = self.next()
            if kind not in ("wire", "reg"):
                raise NetlistError(f"unsupported port kind {kind!r}")
            width = self._opt_range()
            name = self.next()
            mod.ports.append(_Port(direction, name, width))
            mod.nets[name] = width
            if kind == "reg":
                mod.regs.add(name)
            self.accept(",")
        self.expect(";")
        while not self.accept("endmodule"):
            self._module_item(mod)
        return mod

    def _opt_range(self) -> int:
        if self.peek() != "[":
            return 1
        self.expect("[")
        hi = int(self.next())
        self.expect(":")
        lo = int(self.next())
        self.expect("]")
        if lo != 0:
            raise NetlistError("only [hi:0] ranges are supported")
        return hi + 1

    def _module_item(self, mod: _ModuleAst) -> None:
        tok = self.next()
        if tok in ("wire", "reg"):
            width = self._opt_range()
            name = self.next()
            if self.peek() == "[":  # memory: reg [w] name [0:d-1];
                self.expect("[")
                lo = int(self.next())
                self.expect(":")
                hi = int(self.next())
                self.expect("]")
                if lo != 0:
                    raise NetlistError("memory ranges must start at 0")
                mod.arrays[name] = (width, hi + 1)
            else:
                mod.nets[name] = width
            if tok == "reg":
                mod.regs.add(name)
            self.expect(";")
        elif tok == "assign":
            target = self.next()
            self.expect("=")
            expr = self._expr()
            self.expect(";")
            mod.assigns.append((target, expr))
        elif tok == "initial":
            target = self.next()
            index = None
            if self.accept("["):
                index = int(self.next())
                self.expect("]")
            self.expect("=")
            value = self._expr()
            self.expect(";")
            if value[0] != "const":
                raise NetlistError("initial values must be constants")
            mod.inits.append((target, index, value[2]))
        elif tok == "always":
            self.expect("@")
            self.expect("(")
            self.expect("posedge")
            self.expect("clk")
            self.expect(")")
            self.expect("begin")
            while not self.accept("end"):
                mod.clocked.append(self._clocked_stmt())
        else:
            # module instantiation: ModuleName instName ( .port(net), ... );
            child_module = tok
            inst_name = self.next()
            self.expect("(")
            conns: dict[str, str] = {}
            while not self.accept(")"):
                self.expect(".")
                port = self.next()
                self.expect("(")
                net = self.next()
                self.expect(")")
                conns[port] = net
                self.accept(",")
            self.expect(";")
            mod.children.append((child_module, inst_name, conns))

    def _clocked_stmt(self) -> _NbAssign:
        guard = None
        if self.accept("if"):
            self.expect("(")
            guard = self._expr()
            self.expect(")")
        target = self.next()
        index = None
        if self.accept("["):
            index = self._expr()
            self.expect("]")
        self.expect("<=")
        rhs = self._expr()
        self.expect(";")
        return _NbAssign(guard=guard, target=target, index=index, rhs=rhs)

    # expressions ------------------------------------------------------------------
    # grammar (loosest binding first): ?: then binary ops at one level (the
    # emitted form never nests bare binaries), then unary, then primary

    def _expr(self) -> tuple:
        first = self._unary()
        if self.accept("?"):
            then = self._expr()
            self.expect(":")
            other = self._expr()
            return ("ite", first, then, other)
        ops = {"&", "|", "^", "+", "-", "==", "<", "<<", ">>"}
        if self.peek() in ops:
            op = self.next()
            parts = [first, self._unary()]
            while self.peek() == op and op in ("&", "|", "^", "+"):
                self.next()
                parts.append(self._unary())
            if self.peek() in ops:
                raise NetlistError("mixed binary operators need parentheses")
            if self.accept("?"):
                raise NetlistError("?: over bare binaries needs parentheses")
            return ("nary", op, parts)
        return first

    def _unary(self) -> tuple:
        if self.accept("~"):
            return ("not", self._unary())
        return self._primary()

    def _primary(self) -> tuple:
        tok = self.peek()
        if tok == "(":
            self.next()
            inner = self._expr()
            self.expect(")")
            return inner
        if tok == "{":
            self.next()
            parts = [self._expr()]
            while self.accept(","):
                parts.append(self._expr())
            self.expect("}")
            return ("cat", parts)
        if "'" in tok:
            self.next()
            width, value = _const_value(tok)
            return ("const", width, value)
        if re.fullmatch(r"\d+", tok):
            raise NetlistError(f"unsized literal {tok!r} is not supported")
        name = self.next()
        if self.accept("["):
            if re.fullmatch(r"\d+", self.peek()):
                first = int(self.next())
                if self.accept(":"):
                    second = int(self.next())
                    self.expect("]")
                    return ("slice", name, first, second)
                self.expect("]")
                return ("index", name, ("const", 32, first))
            index = self._expr()
            self.expect("]")
            return ("index", name, index)
        return ("ref", name)


# -- flattening ------------------------------------------------------------------


@dataclass
class _FlatWire:
    name: str
    width: int
    expr: tuple


@dataclass
class _FlatNb:
    guard: tuple | None
    target: str
    index: tuple | None
    rhs: tuple


class Netlist:
    """A flattened design ready for cycle-accurate concrete simulation."""

    def __init__(self) -> None:
        self.widths: dict[str, int] = {}
        self.arrays: dict[str, tuple[int, int]] = {}
        self.regs: set[str] = set()
        self.wires: list[_FlatWire] = []
        self.clocked: list[_FlatNb] = []
        self.inputs: list[str] = []
        self.inits: dict[str, int] = {}
        self._wire_order: list[_FlatWire] | None = None

    @classmethod
    def parse(cls, files: dict[str, str], top: str) -> "Netlist":
        tokens: list[str] = []
        for name in sorted(files):
            tokens.extend(_tokenize(files[name]))
        modules = _Parser(tokens).parse_modules()
        if top not in modules:
            raise NetlistError(f"top module {top!r} not found")
        net = cls()
        net._flatten(modules, modules[top], prefix="", bindings={})
        for port in modules[top].ports:
            if port.direction == "input" and port.name != "clk":
                net.inputs.append(port.name)
        net._order_wires()
        return net

    def _flatten(self, modules, mod: _ModuleAst, prefix: str, bindings: dict[str, str]) -> None:
        def flat(name: str) -> str:
            return bindings.get(name, prefix + name)

        for name, width in mod.nets.items():
            self.widths.setdefault(flat(name), width)
        for name, (width, depth) in mod.arrays.items():
            self.arrays[flat(name)] = (width, depth)
        for name in mod.regs:
            self.regs.add(flat(name))
        for target, expr in mod.assigns:
            self.wires.append(_FlatWire(flat(target), self.widths[flat(target)], self._rx(expr, flat)))
        for target, index, value in mod.inits:
            key = flat(target) if index is None else f"{flat(target)}[{index}]"
            self.inits[key] = value
        for nb in mod.clocked:
            self.clocked.append(
                _FlatNb(
                    guard=self._rx(nb.guard, flat) if nb.guard is not None else None,
                    target=flat(nb.target),
                    index=self._rx(nb.index, flat) if nb.index is not None else None,
                    rhs=self._rx(nb.rhs, flat),
                )
            )
        for child_module, inst_name, conns in mod.children:
            child = modules.get(child_module)
            if child is None:
                raise NetlistError(f"instantiated module {child_module!r} not found")
            child_bindings: dict[str, str] = {"clk": "clk"}
            for port, net in conns.items():
                if port == "clk":
                    continue
                child_bindings[port] = flat(net)
            self._flatten(modules, child, prefix=f"{prefix}{inst_name}.", bindings=child_bindings)

    def _rx(self, expr: tuple, flat) -> tuple:
        kind = expr[0]
        if kind == "const":
            return expr
        if kind == "ref":
            return ("ref", flat(expr[1]))
        if kind == "index":
            return ("index", flat(expr[1]), self._rx(expr[2], flat))
        if kind == "slice":
            return ("slice", flat(expr[1]), expr[2], expr[3])
        if kind == "not":
            return ("not", self._rx(expr[1], flat))
        if kind == "nary":
            return ("nary", expr[1], [self._rx(p, flat) for p in expr[2]])
        if kind == "cat":
            return ("cat", [self._rx(p, flat) for p in expr[1]])
        if kind == "ite":
            return ("ite", self._rx(expr[1], flat), self._rx(expr[2], flat), self._rx(expr[3], flat))
        raise NetlistError(f"unknown expression node {kind!r}")

    def _order_wires(self) -> None:
        by_target = {w.name: w for w in self.wires}
        marks: dict[str, int] = {}
        order: list[_FlatWire] = []

        def deps(expr: tuple, acc: set[str]) -> None:
            kind = expr[0]
            if kind in ("ref", "index", "slice"):
                acc.add(expr[1])
                if kind == "index" and isinstance(expr[2], tuple):
                    deps(expr[2], acc)
            elif kind == "not":
                deps(expr[1], acc)
            elif kind == "nary":
                for p in expr[2]:
                    deps(p, acc)
            elif kind == "cat":
                for p in expr[1]:
                    deps(p, acc)
            elif kind == "ite":
                for p in expr[1:]:
                    deps(p, acc)

        def visit(name: str) -> None:
            wire = by_target.get(name)
            if wire is None:
                return
            state = marks.get(name, 0)
            if state == 2:
                return
            if state == 1:
                raise NetlistError(f"combinational loop through {name!r}")
            marks[name] = 1
            need: set[str] = set()
            deps(wire.expr, need)
            for dep in sorted(need):
                visit(dep)
            marks[name] = 2
            order.append(wire)

        for wire in self.wires:
            visit(wire.name)
        self._wire_order = order

    # -- simulation ----------------------------------------------------------------

    def _mask(self, value: int, width: int) -> int:
        return value & ((1 << width) - 1)

    def reset(self) -> dict[str, int]:
        state: dict[str, int] = {}
        for name in self.regs:
            if name in self.arrays:
                _, depth = self.arrays[name]
                for k in range(depth):
                    state[f"{name}[{k}]"] = self.inits.get(f"{name}[{k}]", 0)
            else:
                state[name] = self.inits.get(name, 0)
        return state

    def settle(self, state: dict[str, int], inputs: dict[str, int]) -> dict[str, int]:
        env = dict(state)
        for name in self.inputs:
            env[name] = self._mask(inputs.get(name, 0), self.widths[name])
        assert self._wire_order is not None
        for wire in self._wire_order:
            env[wire.name] = self._mask(self._eval(wire.expr, env), wire.width)
        return env

    def step(self, state: dict[str, int], inputs: dict[str, int]) -> dict[str, int]:
        """One rising clock edge; returns the next register state."""
        env = self.settle(state, inputs)
        nxt = dict(state)
        for nb in self.clocked:
            if nb.guard is not None and not self._eval(nb.guard, env):
                continue
            if nb.index is not None:
                idx = self._eval(nb.index, env)
                width, depth = self.arrays[nb.target]
                if idx >= depth:
                    continue
                nxt[f"{nb.target}[{idx}]"] = self._mask(self._eval(nb.rhs, env), width)
            else:
                nxt[nb.target] = self._mask(self._eval(nb.rhs, env), self.widths[nb.target])
        return nxt

    def _eval(self, expr: tuple, env: dict[str, int]) -> int:
        kind = expr[0]
        if kind == "const":
            return self._mask(expr[2], expr[1])
        if kind == "ref":
            return env[expr[1]]
        if kind == "index":
            idx = self._eval(expr[2], env)
            if expr[1] in self.arrays:
                width, depth = self.arrays[expr[1]]
                if idx >= depth:
                    return 0
                return env[f"{expr[1]}[{idx}]"]
            return (env[expr[1]] >> idx) & 1
        if kind == "slice":
            hi, lo = expr[2], expr[3]
            return (env[expr[1]] >> lo) & ((1 << (hi - lo + 1)) - 1)
        if kind == "not":
            return self._mask(~self._eval(expr[1], env), self._expr_width(expr[1]))
        if kind == "nary":
            op = expr[1]
            values = [self._eval(p, env) for p in expr[2]]
            if op == "&":
                out = values[0]
                for v in values[1:]:
                    out &= v
                return out
            if op == "|":
                out = values[0]
                for v in values[1:]:
                    out |= v
                return out
            if op == "^":
                out = values[0]
                for v in values[1:]:
                    out ^= v
                return out
            if op == "+":
                return sum(values)
            if op == "-":
                return values[0] - values[1]
            if op == "==":
                return int(values[0] == values[1])
            if op == "<":
                return int(values[0] < values[1])
            if op == "<<":
                return values[0] << values[1]
            if op == ">>":
                return values[0] >> values[1]
            raise NetlistError(f"unknown operator {op!r}")
        if kind == "cat":
            out = 0
            for part in expr[1]:
                out = (out << self._expr_width(part)) | self._mask(
                    self._eval(part, env), self._expr_width(part)
                )
            return out
        if kind == "ite":
            return self._eval(expr[2], env) if self._eval(expr[1], env) else self._eval(expr[3], env)
        raise NetlistError(f"unknown expression node {kind!r}")

    def _expr_width(self, expr: tuple) -> int:
        kind = expr[0]
        if kind == "const":
            return expr[1]
        if kind == "ref":
            return self.widths[expr[1]]
        if kind == "index":
            if expr[1] in self.arrays:
                return self.arrays[expr[1]][0]
            return 1
        if kind == "slice":
            return expr[2] - expr[3] + 1
        if kind == "not":
            return self._expr_width(expr[1])
        if kind == "nary":
            op = expr[1]
            if op in ("==", "<"):
                return 1
            return max(self._expr_width(p) for p in expr[2])
        if kind == "cat":
            return sum(self._expr_width(p) for p in expr[1])
        if kind == "ite":
            return max(self._expr_width(expr[2]), self._expr_width(expr[3]))
        raise NetlistError(f"unknown expression node {kind!r}")
