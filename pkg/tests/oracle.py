"""Independent concrete reference models for the test suite.

Everything here re-derives behavior with plain integers instead of calling
the package's own evaluators: `eval_x` is a fresh recursion over term nodes,
`ConcreteSim` interprets an elaborated design cycle by cycle, `run_sequence`
executes a verification sequence deterministically, and the trace helpers
check assertion directives against explicit input traces. Tests treat any
divergence between the package and these models as a failure.
"""

from __future__ import annotations

from tlvc import ast
from tlvc.design import (
    Design,
    VApplyTr,
    VAssigns,
    VCallVtr,
    VCover,
    VDrive,
    VExit,
    VFork,
    VGoto,
    VRandom,
    VWait,
    expand_sites,
)
from tlvc.sva import SvaImplication, SvaSeq, SvaStep


class OracleError(Exception):
    pass


def bitmask(width: int) -> int:
    return (1 << width) - 1


# -- term evaluation --------------------------------------------------------------


def eval_x(term, env: dict[str, int]) -> int:
    """Evaluate a term over integer variable values.

    Deliberately does not call the package's evaluator; the semantics are
    written out per node kind: every result is truncated to the node width,
    add/sub wrap, shifts are logical, eq/lt yield 0/1, select takes the bits
    [lo + width - 1 : lo], and concat puts its first operand highest.
    """
    memo: dict[int, int] = {}

    def go(t) -> int:
        got = memo.get(t.id)
        if got is not None:
            return got
        kind = t.kind
        if kind == "const":
            value = t.value & bitmask(t.width)
        elif kind == "var":
            value = env[t.name] & bitmask(t.width)
        elif kind == "and":
            value = bitmask(t.width)
            for a in t.args:
                value &= go(a)
        elif kind == "or":
            value = 0
            for a in t.args:
                value |= go(a)
        elif kind == "xor":
            value = 0
            for a in t.args:
                value ^= go(a)
        elif kind == "add":
            value = 0
            for a in t.args:
                value += go(a)
            value &= bitmask(t.width)
        elif kind == "sub":
            value = (go(t.args[0]) - go(t.args[1])) & bitmask(t.width)
        elif kind == "not":
            value = ~go(t.args[0]) & bitmask(t.width)
        elif kind == "eq":
            value = 1 if go(t.args[0]) == go(t.args[1]) else 0
        elif kind == "lt":
            value = 1 if go(t.args[0]) < go(t.args[1]) else 0
        elif kind == "shl":
            value = (go(t.args[0]) << go(t.args[1])) & bitmask(t.width)
        elif kind == "shr":
            value = go(t.args[0]) >> go(t.args[1])
        elif kind == "select":
            value = (go(t.args[0]) >> t.lo) & bitmask(t.width)
        elif kind == "concat":
            value = 0
            for a in t.args:
                value = (value << a.width) | go(a)
        elif kind == "ite":
            value = go(t.args[1]) if go(t.args[0]) else go(t.args[2])
        else:
            raise OracleError(f"cannot evaluate term kind {kind!r}")
        memo[t.id] = value
        return value

    return go(term)


# -- cycle-level design interpreter -------------------------------------------------


class ConcreteSim:
    """Plain-integer, cycle-accurate interpreter of an elaborated design.

    `state` maps every non-wire signal to an int (array elements under
    `name[k]` keys) plus, after `settle`, every combinational signal. A
    clock edge samples the settled pre-edge state once, commits queued
    stimulus writes first and clocked hardware writes after (later writes
    win), resets every pulse that was not driven on the edge to 0, and
    resettles.
    """

    def __init__(self, design: Design):
        self.design = design
        self.pulses = [info.flat for info in design.signals.values() if info.klass == "pulse"]
        # clocked hardware sites in application order; drives write 1
        self.clocked: list[tuple] = []
        for tr in design.hardware_trs:
            for site in expand_sites(tr):
                if not site.registered:
                    continue
                if site.action == "assign":
                    assert site.assign is not None
                    if design.signals[site.assign.flat].klass == "seq":
                        a = site.assign
                        self.clocked.append((site, a.flat, a.rhs, a.index, a.width, a.depth))
                elif site.action == "drive":
                    self.clocked.append((site, site.cond, None, None, 1, None))
        self.state: dict[str, int] = {}
        self.reset()

    def reset(self) -> None:
        self.state = {}
        for info in self.design.signals.values():
            if info.klass == "comb":
                continue
            if info.depth is not None:
                for k in range(info.depth):
                    self.state[f"{info.flat}[{k}]"] = 0
            else:
                self.state[info.flat] = 0
        self.settle()

    def settle(self) -> None:
        for flat in self.design.comb_order:
            self.state[flat] = eval_x(self.design.comb_equations[flat], self.state)

    def guard_of(self, site, env: dict[str, int]) -> int:
        for name in site.guards:
            if not env.get(name, 0):
                return 0
        return 1

    def _write(self, flat: str, index: int | None, value: int, width: int, depth: int | None,
               into: dict[str, int]) -> None:
        if depth is None:
            into[flat] = value & bitmask(width)
        elif index is not None and 0 <= index < depth:
            into[f"{flat}[{index}]"] = value & bitmask(width)

    # -- stimulus (immediate, pre-edge) ------------------------------------------

    def stim_assign(self, assign) -> None:
        value = eval_x(assign.rhs, self.state)
        index = eval_x(assign.index, self.state) if assign.index is not None else None
        self._write(assign.flat, index, value, assign.width, assign.depth, self.state)
        self.settle()

    def stim_drive(self, cond: str) -> None:
        self.state[cond] = 1
        self.settle()

    def stim_apply_tr(self, tr, pending: list) -> list:
        """Apply a stimulus transaction: immediate writes now, clocked queued.

        Queued entries are (flat, index, value, guard, width, depth) with
        everything already evaluated against the state at queue time.
        """
        for site in expand_sites(tr):
            guard = self.guard_of(site, self.state)
            if site.action == "drive":
                assert site.cond is not None
                if site.registered:
                    pending.append((site.cond, None, 1, guard, 1, None))
                elif guard:
                    self.stim_drive(site.cond)
            elif site.action == "assign":
                a = site.assign
                if site.registered:
                    value = eval_x(a.rhs, self.state)
                    index = eval_x(a.index, self.state) if a.index is not None else None
                    pending.append((a.flat, index, value, guard, a.width, a.depth))
                elif guard:
                    self.stim_assign(a)
        return pending

    # -- the clock edge ------------------------------------------------------------

    def cycle(self, pending=()) -> None:
        self.settle()
        env = dict(self.state)
        updates: dict[str, int] = {}

        def commit(flat, index, value, guard, width, depth) -> None:
            if guard:
                self._write(flat, index, value, width, depth, updates)

        for entry in pending:
            commit(*entry)
        for site, flat, rhs, index_term, width, depth in self.clocked:
            guard = self.guard_of(site, env)
            if not guard:
                continue
            if rhs is None:
                commit(flat, None, 1, 1, 1, None)
            else:
                value = eval_x(rhs, env)
                index = eval_x(index_term, env) if index_term is not None else None
                commit(flat, index, value, 1, width, depth)
        for flat in self.pulses:
            if flat not in updates:
                updates[flat] = 0
        self.state.update(updates)
        self.settle()


# -- deterministic sequence execution -----------------------------------------------


class SequenceRun:
    """What one concrete execution of a sequence produced."""

    def __init__(self, sim: ConcreteSim):
        self.sim = sim
        self.covers: list[tuple[str, tuple[int, ...], int]] = []  # (qual, cond values, cycle)
        self.cycles = 0
        self.drawn: list[tuple[str, int]] = []

    def hits(self, qual: str) -> list[tuple[int, ...]]:
        return [values for name, values, _ in self.covers if name == qual]


def _draw_queues(draws) -> dict[str, list[int]]:
    """Normalize draw values into one FIFO per signal.

    Accepts plain names mapped to an int or a list of ints, and witness-style
    `name?n` keys whose values are handed out in ascending n.
    """
    keyed: dict[str, list[tuple[int, int]]] = {}
    plain: dict[str, list[int]] = {}
    for key, value in (draws or {}).items():
        if "?" in key:
            base, _, n = key.rpartition("?")
            keyed.setdefault(base, []).append((int(n), value))
        elif isinstance(value, (list, tuple)):
            plain.setdefault(key, []).extend(value)
        else:
            plain.setdefault(key, []).append(value)
    for base, pairs in keyed.items():
        plain.setdefault(base, []).extend(v for _, v in sorted(pairs))
    return plain


def run_sequence(design: Design, top: str, draws=None, max_cycles: int = 256) -> SequenceRun:
    """Execute a sequence concretely and deterministically.

    `draws` supplies the value for each `random` statement (per signal, in
    execution order; missing draws are 0). Waits block until their condition
    samples true; called sequences share the simulator and resume the caller
    in the cycle they exit. Forks are outside this interpreter's subset.
    """
    sim = ConcreteSim(design)
    queues = _draw_queues(draws)
    run = SequenceRun(sim)
    pending: list = []

    def next_draw(flat: str) -> int:
        queue = queues.get(flat)
        return queue.pop(0) if queue else 0

    def do_cycle() -> None:
        if run.cycles + 1 > max_cycles:
            raise OracleError(f"cycle budget exceeded ({max_cycles})")
        sim.cycle(tuple(pending))
        pending.clear()
        run.cycles += 1

    def step_stack(stack) -> object:
        """Advance until the path blocks on a wait, jumps, exits, or runs out."""
        while stack:
            stmts, idx = stack[-1]
            if idx >= len(stmts):
                stack.pop()
                continue
            stmt = stmts[idx]
            if isinstance(stmt, VWait):
                if sim.state.get(stmt.cond, 0):
                    stack[-1][1] += 1
                    stack.append([stmt.body, 0])
                else:
                    return "wait"
                continue
            stack[-1][1] += 1
            if isinstance(stmt, VAssigns):
                for assign in stmt.assigns:
                    sim.stim_assign(assign)
            elif isinstance(stmt, VDrive):
                sim.stim_drive(stmt.cond)
            elif isinstance(stmt, VApplyTr):
                sim.stim_apply_tr(stmt.tr, pending)
            elif isinstance(stmt, VRandom):
                value = next_draw(stmt.flat) & bitmask(stmt.width)
                run.drawn.append((stmt.flat, value))
                sim.state[stmt.flat] = value
                sim.settle()
            elif isinstance(stmt, VCover):
                values = tuple(sim.state.get(c, 0) for c in stmt.conds)
                run.covers.append((stmt.qual, values, run.cycles))
            elif isinstance(stmt, VGoto):
                return ("goto", stmt.state)
            elif isinstance(stmt, VExit):
                return "exit"
            elif isinstance(stmt, VCallVtr):
                run_one(stmt.qual)
            elif isinstance(stmt, VFork):
                raise OracleError("fork is outside the concrete interpreter subset")
            else:
                raise OracleError(f"unsupported statement {type(stmt).__name__}")
        return "done"

    def run_one(qual: str) -> None:
        vtr = design.vtrs[qual]
        stack = [[vtr.states[vtr.first_state], 0]]
        while True:
            outcome = step_stack(stack)
            if outcome == "exit":
                return
            if outcome == "done":
                raise OracleError(f"a state of {qual} ends without goto or exit")
            do_cycle()
            if isinstance(outcome, tuple):
                stack = [[vtr.states[outcome[1]], 0]]

    run_one(top)
    return run


# -- bounded assertion-trace checking -----------------------------------------------


def eval_expr(expr, env: dict[str, int]) -> int:
    """Evaluate a parsed Boolean-layer expression over sampled values."""
    if isinstance(expr, ast.Literal):
        return expr.value
    if isinstance(expr, ast.Ident):
        return env[expr.name]
    if isinstance(expr, ast.Unary):
        if expr.op == "!":
            return 0 if eval_expr(expr.operand, env) else 1
        raise OracleError(f"unary {expr.op!r} is outside the trace checker subset")
    if isinstance(expr, ast.Binary):
        left = eval_expr(expr.left, env)
        if expr.op == "&&":
            return 1 if left and eval_expr(expr.right, env) else 0
        if expr.op == "||":
            return 1 if left or eval_expr(expr.right, env) else 0
        right = eval_expr(expr.right, env)
        if expr.op == "==":
            return 1 if left == right else 0
        if expr.op == "!=":
            return 1 if left != right else 0
        if expr.op in ("&", "|", "^"):
            return {"&": left & right, "|": left | right, "^": left ^ right}[expr.op]
        raise OracleError(f"binary {expr.op!r} is outside the trace checker subset")
    raise OracleError(f"{type(expr).__name__} is outside the trace checker subset")


def sample_trace(design: Design, input_names: list[str], trace) -> list[dict[str, int]]:
    """Pre-edge samples of the whole design under a per-cycle input trace.

    `trace[u]` holds the values driven onto `input_names` at cycle u; the
    returned list holds the settled state sampled at each of those cycles.
    """
    sim = ConcreteSim(design)
    samples: list[dict[str, int]] = []
    for values in trace:
        for name, value in zip(input_names, values):
            sim.state[name] = value
        sim.settle()
        samples.append(dict(sim.state))
        sim.cycle(())
    return samples


def assert_parts(directive) -> tuple[SvaSeq, SvaSeq, int]:
    """(antecedent, consequent, shift) of an assert; bare sequences get a
    constant-true antecedent and check at every cycle."""
    prop = directive.prop
    if isinstance(prop, SvaImplication):
        return prop.antecedent, prop.consequent, 0 if prop.overlapped else 1
    always = SvaSeq(steps=(SvaStep(offset=0, expr=ast.Literal(span=prop.span, value=1)),))
    return always, prop, 0


def assert_window(directive, trace_cycles: int = 8) -> int:
    """Cycles a bounded checker for this assert observes before concluding."""
    antecedent, consequent, shift = assert_parts(directive)
    depth = max(step.offset + shift for step in consequent.steps)
    concurrent = antecedent.length + depth + 1
    return max(trace_cycles, concurrent + 1)


def assert_holds(directive, samples: list[dict[str, int]]) -> bool:
    """Bounded check of an assert directive over one sampled trace.

    Every antecedent match starting at or after cycle 0 must satisfy each
    consequent step whose check cycle falls inside the sampled window;
    checks landing beyond the window are vacuous.
    """
    antecedent, consequent, shift = assert_parts(directive)
    window = len(samples)
    for start in range(window):
        if start + antecedent.length >= window:
            break
        if not all(
            eval_expr(step.expr, samples[start + step.offset]) for step in antecedent.steps
        ):
            continue
        for step in consequent.steps:
            check = start + antecedent.length + shift + step.offset
            if check < window and not eval_expr(step.expr, samples[check]):
                return False
    return True


def cover_prefix_reachable(directive, all_samples: list[list[dict[str, int]]]) -> list[bool]:
    """Per step of a cover directive: can some trace satisfy steps 0..j at
    their offsets, with the match anchored at cycle 0?"""
    prop = directive.prop
    assert isinstance(prop, SvaSeq)
    first = prop.steps[0].offset
    reachable: list[bool] = []
    for j in range(len(prop.steps)):
        prefix = prop.steps[: j + 1]
        hit = any(
            all(eval_expr(step.expr, samples[step.offset - first]) for step in prefix)
            for samples in all_samples
        )
        reachable.append(hit)
    return reachable
