"""SystemVerilog assertion subset: parsing and lowering onto the sequence IR.

The supported slice is the Boolean layer, fixed ##N delays, sequence
concatenation, and |-> / |=> implication, inside `assert property` and
`cover property` directives with a posedge clocking event. Designs are
single-clock, so the clock name is recorded and otherwise ignored.

Each assert lowers to a synthesized checker in its own cluster: one condition
per Boolean step, one-bit clocked registers forming delay pipelines that
track every in-flight activation of the property, a sticky error register,
and a monitor sequence that drives all free design inputs with fresh random
values for a bounded number of cycles before covering "the error register
never latched". A cover directive instead lowers to a directed sequence that
drives the drivable input literals of each step at its sample cycle and
covers the step condition right there.

Anything outside the subset is rejected with an error naming the feature
(liveness operators, intersect, throughout, repetition, sampled-value
functions, ...) so callers know what to rewrite.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import ast, design
from .lexer import Token, tokenize
from .parser import _Parser
from .source import NO_SPAN, CompileError, Span

DEFAULT_ACTIVATION_BOUND = 4
DEFAULT_TRACE_CYCLES = 8


# -- AST ------------------------------------------------------------------------


@dataclass(frozen=True)
class SvaStep:
    """One Boolean sample, `offset` cycles after the start of its sequence."""

    offset: int
    expr: ast.Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class SvaSeq:
    steps: tuple[SvaStep, ...]
    span: Span = field(default=NO_SPAN, compare=False)

    @property
    def length(self) -> int:
        """Cycles between the first and the last sample."""
        return self.steps[-1].offset


@dataclass(frozen=True)
class SvaImplication:
    """antecedent |-> consequent; |=> shifts the consequent one cycle late."""

    antecedent: SvaSeq
    consequent: SvaSeq
    overlapped: bool
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class SvaDirective:
    kind: str  # "assert" | "cover"
    label: str
    clock: str
    prop: SvaSeq | SvaImplication
    span: Span = field(default=NO_SPAN, compare=False)


# -- parsing -------------------------------------------------------------------

_LIVENESS = {
    "always",
    "eventually",
    "nexttime",
    "s_always",
    "s_eventually",
    "s_nexttime",
    "s_until",
    "s_until_with",
    "until",
    "until_with",
}

_NAMED_FEATURES = {
    "intersect": "intersect",
    "throughout": "throughout",
    "within": "within",
    "first_match": "first_match",
    "and": "sequence conjunction (and)",
    "or": "sequence disjunction (or)",
    "disable": "disable iff",
}


def _unsupported(feature: str, span: Span) -> CompileError:
    return CompileError(f"unsupported SVA feature: {feature}", span)


def _screen_directive(tokens: list[Token], start: int) -> None:
    """Reject named out-of-subset constructs before the directive's ';'."""
    i = start
    while i < len(tokens) and tokens[i].kind != "eof" and tokens[i].text != ";":
        tok = tokens[i]
        nxt = tokens[i + 1] if i + 1 < len(tokens) else tok
        if tok.kind in ("ident", "keyword"):
            if tok.text in _LIVENESS:
                raise _unsupported(f"liveness ({tok.text})", tok.span)
            if tok.text in _NAMED_FEATURES:
                raise _unsupported(_NAMED_FEATURES[tok.text], tok.span)
        elif tok.kind == "op":
            if tok.text == "$":
                raise _unsupported(f"sampled-value function (${nxt.text})", tok.span)
            if tok.text == "[":
                if nxt.text == "*":
                    raise _unsupported("consecutive repetition ([*])", tok.span)
                if nxt.text == "=":
                    raise _unsupported("non-consecutive repetition ([=])", tok.span)
                if nxt.text == "-" and i + 2 < len(tokens) and tokens[i + 2].text == ">":
                    raise _unsupported("goto repetition ([->])", tok.span)
        i += 1
    if i >= len(tokens) or tokens[i].kind == "eof":
        raise CompileError("missing ';' after property directive", tokens[start].span)


class _SvaParser(_Parser):
    def parse_directives(self) -> tuple[SvaDirective, ...]:
        directives: list[SvaDirective] = []
        while self.peek().kind != "eof":
            directives.append(self._directive(len(directives)))
        return tuple(directives)

    def _directive(self, index: int) -> SvaDirective:
        _screen_directive(self.tokens, self.pos)
        label = f"p{index}"
        if self.peek().kind == "ident" and self.peek(1).text == ":":
            label = self.advance().text
            self.advance()
        kw = self.peek()
        if self.accept("assert"):
            kind = "assert"
        elif self.accept("cover"):
            kind = "cover"
        else:
            raise CompileError(
                f"expected `assert property` or `cover property`, found {kw.text!r}", kw.span
            )
        self.expect("property")
        self.expect("(")
        clock = self._clocking()
        prop = self._property(kind)
        self.expect(")")
        semi = self.expect(";")
        return SvaDirective(
            kind=kind, label=label, clock=clock, prop=prop, span=kw.span.merge(semi.span)
        )

    def _clocking(self) -> str:
        self.expect("@")
        self.expect("(")
        self.expect("posedge")
        clk = self.expect_ident()
        self.expect(")")
        return clk.text

    def _property(self, kind: str) -> SvaSeq | SvaImplication:
        antecedent = self._sequence()
        tok = self.peek()
        if tok.text in ("|->", "|=>"):
            if kind == "cover":
                raise _unsupported("implication inside cover property", tok.span)
            self.advance()
            consequent = self._sequence()
            return SvaImplication(
                antecedent=antecedent,
                consequent=consequent,
                overlapped=tok.text == "|->",
                span=antecedent.span.merge(consequent.span),
            )
        return antecedent

    def _sequence(self) -> SvaSeq:
        first = self.peek()
        offset = self._delay() if self.at("##") else 0
        steps = [self._step(offset)]
        while self.at("##"):
            offset += self._delay()
            steps.append(self._step(offset))
        return SvaSeq(steps=tuple(steps), span=first.span.merge(steps[-1].span))

    def _step(self, offset: int) -> SvaStep:
        expr = self.parse_expr()
        return SvaStep(offset=offset, expr=expr, span=expr.span)

    def _delay(self) -> int:
        self.expect("##")
        tok = self.peek()
        if tok.text == "[":
            raise _unsupported("delay range (##[n:m])", tok.span)
        if tok.kind != "number":
            raise CompileError("## needs a plain decimal cycle count", tok.span)
        self.advance()
        return tok.value or 0


def _rebase(tok: Token, base: Span) -> Token:
    """Relocate a token span from block-local to file coordinates."""
    s = tok.span
    col = s.col + base.col - 1 if s.line == 1 else s.col
    moved = Span(s.start + base.start, s.end + base.start, s.line + base.line - 1, col, base.filename)
    return replace(tok, span=moved)


def parse_sva(text: str, filename: str = "<sva>", base: Span | None = None) -> tuple[SvaDirective, ...]:
    """Parse assertion directives; blank input yields the empty tuple.

    `base` relocates diagnostics for text embedded in a larger file, as with
    inline `sva { ... }` blocks.
    """
    tokens = tokenize(text, filename)
    if base is not None:
        tokens = [_rebase(tok, base) for tok in tokens]
        filename = base.filename
    return _SvaParser(tokens, text, filename).parse_directives()


# -- lowering --------------------------------------------------------------------


def _ident(name: str, span: Span) -> ast.Ident:
    return ast.Ident(span=span, name=name)


def _and(left: ast.Expr, right: ast.Expr, span: Span) -> ast.Expr:
    return ast.Binary(span=span, op="&&", left=left, right=right)


def _not(operand: ast.Expr, span: Span) -> ast.Expr:
    return ast.Unary(span=span, op="!", operand=operand)


class _Lower:
    """Build the checker cluster for one directive."""

    def __init__(
        self,
        directive: SvaDirective,
        label: str,
        inputs: dict[str, int],
        activation_bound: int,
        trace_cycles: int,
    ):
        self.directive = directive
        self.base = f"sva_{label}"
        self.inputs = inputs
        self.activation_bound = activation_bound
        self.trace_cycles = trace_cycles
        self.span = directive.span
        self.signals: list[ast.SignalDecl] = []
        self.conditions: list[ast.ConditionDecl] = []
        self.regs: list[ast.Assign] = []  # clocked next-state of the checker
        self.datapaths: list[ast.DatapathDecl] = []
        self.vtr: ast.VtrDecl | None = None

    def build(self) -> ast.ClusterDecl:
        if self.directive.kind == "assert":
            self._build_assert()
        else:
            self._build_cover()
        transactions: tuple[ast.TransactionDecl, ...] = ()
        if self.regs:
            step = ast.DatapathDecl(name=f"d_{self.base}_next", assigns=tuple(self.regs), span=self.span)
            self.datapaths.append(step)
            clocked = ast.TrGuard(
                span=self.span,
                guard="e_clk",
                items=(ast.TrApplyDatapath(span=self.span, name=step.name),),
            )
            transactions = (
                ast.TransactionDecl(name=f"tr_{self.base}", items=(clocked,), span=self.span),
            )
        assert self.vtr is not None
        return ast.ClusterDecl(
            name=f"cl_{self.base}",
            signals=tuple(self.signals),
            conditions=tuple(self.conditions),
            datapaths=tuple(self.datapaths),
            transactions=transactions,
            vtrs=(self.vtr,),
            span=self.span,
        )

    # -- shared pieces ---------------------------------------------------------

    def _cond(self, name: str, body: ast.Expr) -> str:
        self.conditions.append(ast.ConditionDecl(name=name, body=body, span=self.span))
        return name

    def _reg(self, name: str) -> str:
        self.signals.append(ast.SignalDecl(name=name, width=1, span=self.span))
        return name

    def _delay_taps(self, prefix: str, source: str, cycles: int) -> list[str]:
        """Names carrying `source` delayed by 0..cycles clock edges."""
        taps = [source]
        for k in range(1, cycles + 1):
            reg = self._reg(f"{prefix}{k}")
            self.regs.append(
                ast.Assign(target=reg, index=None, rhs=_ident(taps[-1], self.span), span=self.span)
            )
            taps.append(reg)
        return taps

    # -- assert directives ------------------------------------------------------

    def _build_assert(self) -> None:
        prop = self.directive.prop
        if isinstance(prop, SvaImplication):
            antecedent, consequent = prop.antecedent, prop.consequent
            shift = 0 if prop.overlapped else 1
        else:
            # a bare sequence asserts itself at every cycle
            always = SvaStep(offset=0, expr=ast.Literal(span=prop.span, value=1), span=prop.span)
            antecedent = SvaSeq(steps=(always,), span=prop.span)
            consequent, shift = prop, 0
        base, span = self.base, self.span

        # antecedent match chain: c_*_m{i} is true when steps 0..i matched,
        # ending at the current cycle
        match = self._cond(f"c_{base}_a0", antecedent.steps[0].expr)
        for i, step in enumerate(antecedent.steps[1:], start=1):
            delta = step.offset - antecedent.steps[i - 1].offset
            carried = self._delay_taps(f"{base}_r{i}_", match, delta)[-1]
            step_cond = self._cond(f"c_{base}_a{i}", step.expr)
            match = self._cond(
                f"c_{base}_m{i}",
                _and(_ident(carried, span), _ident(step_cond, span), span),
            )

        # consequent checks: tap the match `shift + offset` cycles later
        depth = max(step.offset + shift for step in consequent.steps)
        concurrent = antecedent.length + depth + 1
        if concurrent > self.activation_bound:
            raise CompileError(
                f"property '{self.directive.label}' tracks {concurrent} overlapping"
                f" activations, over the activation bound ({self.activation_bound});"
                f" raise the bound to at least {concurrent}",
                self.directive.span,
            )
        taps = self._delay_taps(f"{base}_q", match, depth)
        checks: list[ast.Expr] = []
        for j, step in enumerate(consequent.steps):
            step_cond = self._cond(f"c_{base}_c{j}", step.expr)
            tap = taps[step.offset + shift]
            checks.append(_and(_ident(tap, span), _not(_ident(step_cond, span), span), span))
        fail_body = checks[0]
        for check in checks[1:]:
            fail_body = ast.Binary(span=span, op="||", left=fail_body, right=check)
        fail = self._cond(f"c_{base}_fail", fail_body)

        err = self._reg(f"{base}_err")
        self.regs.append(
            ast.Assign(
                target=err,
                index=None,
                rhs=ast.Binary(span=span, op="||", left=_ident(err, span), right=_ident(fail, span)),
                span=span,
            )
        )
        ok = self._cond(f"c_{base}_ok", _not(_ident(err, span), span))
        self.vtr = self._monitor_vtr(ok, concurrent)

    def _monitor_vtr(self, ok: str, concurrent: int) -> ast.VtrDecl:
        """Random free inputs for enough cycles, then cover the ok condition."""
        cycles = max(self.trace_cycles, concurrent + 1)
        randoms = tuple(ast.Random(span=self.span, signal=name) for name in sorted(self.inputs))
        states = []
        for k in range(cycles):
            name = "init" if k == 0 else f"t{k}"
            target = "done" if k == cycles - 1 else f"t{k + 1}"
            states.append(
                ast.SeqState(name=name, body=(*randoms, ast.Goto(span=self.span, state=target)), span=self.span)
            )
        covered = ast.Cover(span=self.span, name=f"cp_{self.base}", conditions=(ok,))
        states.append(
            ast.SeqState(name="done", body=(covered, ast.Exit(span=self.span)), span=self.span)
        )
        seq = ast.SequenceDecl(name="s", states=tuple(states), span=self.span)
        return ast.VtrDecl(name=f"vtr_{self.base}", sequence=seq, span=self.span)

    # -- cover directives --------------------------------------------------------

    def _build_cover(self) -> None:
        prop = self.directive.prop
        assert isinstance(prop, SvaSeq)
        base, span = self.base, self.span
        by_offset: dict[int, list[tuple[int, SvaStep]]] = {}
        for j, step in enumerate(prop.steps):
            by_offset.setdefault(step.offset, []).append((j, step))

        states = []
        offsets = range(prop.steps[0].offset, prop.length + 1)
        for k in offsets:
            body: list[ast.Stmt] = []
            for j, step in by_offset.get(k, []):
                drives = self._drivable_literals(step.expr)
                if drives:
                    dp = ast.DatapathDecl(name=f"d_{base}_s{j}", assigns=tuple(drives), span=span)
                    self.datapaths.append(dp)
                    body.append(ast.ApplyDatapath(span=span, name=dp.name))
                step_cond = self._cond(f"c_{base}_s{j}", step.expr)
                body.append(ast.Cover(span=span, name=f"cp_{base}_s{j}", conditions=(step_cond,)))
            if k == prop.length:
                body.append(ast.Exit(span=span))
            else:
                body.append(ast.Goto(span=span, state=f"t{k + 1}"))
            name = "init" if k == offsets[0] else f"t{k}"
            states.append(ast.SeqState(name=name, body=tuple(body), span=span))
        seq = ast.SequenceDecl(name="s", states=tuple(states), span=span)
        self.vtr = ast.VtrDecl(name=f"vtr_{base}", sequence=seq, span=span)

    def _drivable_literals(self, expr: ast.Expr) -> list[ast.Assign]:
        """Assignments realizing the free-input literals of a conjunction."""
        out: list[ast.Assign] = []
        stack = [expr]
        while stack:
            node = stack.pop()
            if isinstance(node, ast.Binary) and node.op == "&&":
                stack.extend((node.right, node.left))
            elif isinstance(node, ast.Ident) and node.name in self.inputs:
                out.append(
                    ast.Assign(target=node.name, index=None, rhs=ast.Literal(span=node.span, value=1), span=node.span)
                )
            elif (
                isinstance(node, ast.Unary)
                and node.op in ("!", "~")
                and isinstance(node.operand, ast.Ident)
                and node.operand.name in self.inputs
            ):
                out.append(
                    ast.Assign(
                        target=node.operand.name,
                        index=None,
                        rhs=ast.Literal(span=node.span, value=0),
                        span=node.span,
                    )
                )
        return out


def lower_to_vtr(
    directives,
    inputs: dict[str, int],
    activation_bound: int = DEFAULT_ACTIVATION_BOUND,
    trace_cycles: int = DEFAULT_TRACE_CYCLES,
) -> tuple[ast.ClusterDecl, ...]:
    """Lower parsed directives into checker clusters, one per directive.

    `inputs` maps free design input names to widths; the monitor sequences
    randomize exactly those signals each cycle.
    """
    clusters: list[ast.ClusterDecl] = []
    seen: dict[str, int] = {}
    for directive in directives:
        n = seen.get(directive.label, 0) + 1
        seen[directive.label] = n
        label = directive.label if n == 1 else f"{directive.label}_{n}"
        lower = _Lower(directive, label, inputs, activation_bound, trace_cycles)
        clusters.append(lower.build())
    return tuple(clusters)


# -- source-unit expansion -------------------------------------------------------


def expand_unit(
    unit: ast.SourceUnit,
    top: str | None = None,
    activation_bound: int | None = None,
    trace_cycles: int | None = None,
) -> ast.SourceUnit:
    """Replace every sva block in the unit with its lowered checker cluster.

    The checkers join the top build instance, where name resolution can reach
    the whole design. Free inputs are discovered by elaborating the design
    without its sva blocks first.
    """
    blocks = [block for cluster in unit.clusters for block in cluster.sva_blocks]
    stripped = replace(
        unit, clusters=tuple(replace(c, sva_blocks=()) for c in unit.clusters)
    )
    if not blocks:
        return unit
    bound = DEFAULT_ACTIVATION_BOUND if activation_bound is None else activation_bound
    cycles = DEFAULT_TRACE_CYCLES if trace_cycles is None else trace_cycles

    directives: list[SvaDirective] = []
    for block in blocks:
        directives.extend(parse_sva(block.text, base=block.body))
    if not directives:
        return stripped

    base_design = design.elaborate(stripped, top=top)
    inputs = {
        info.name: info.width
        for info in base_design.signals.values()
        if info.klass == "input" and info.depth is None
    }
    checkers = lower_to_vtr(directives, inputs, bound, cycles)

    top_decl = unit.builds[0]
    if top is not None:
        top_decl = next(b for b in unit.builds if b.name == top)
    joins = tuple(
        ast.Join(span=cluster.span, source=cluster, target=top_decl.name) for cluster in checkers
    )
    builds = tuple(
        replace(b, body=b.body + joins) if b.name == top_decl.name else b for b in stripped.builds
    )
    return replace(stripped, builds=builds)
