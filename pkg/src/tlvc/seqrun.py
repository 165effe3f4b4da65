"""Bounded symbolic execution of verification sequences.

A sequence runs as a set of paths. Statements execute within the current
cycle; a state transition or an unsatisfied wait consumes one clock cycle.
Wait guards with symbolic values split the path, accumulating the assumed
value into the path condition. Sequence calls are memoized: a callee entered
twice in an equivalent symbolic state (equal up to variable renaming) replays
its recorded exits instead of executing again.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace

from . import terms
from .design import (
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
from .engine import Engine, PendingWrite
from .source import NO_SPAN, CompileError
from .state import StateList
from .terms import Term


@dataclass(frozen=True)
class RunLimits:
    max_cycles: int = 256
    max_paths: int = 256
    max_trace: int = 400


@dataclass(frozen=True)
class CoverHit:
    qual: str
    conds: tuple[Term, ...]  # condition values at the hit
    path_cond: Term
    cycle: int


@dataclass(frozen=True)
class Snapshot:
    """Everything a path carries besides its control point."""

    st: StateList
    pending: tuple[PendingWrite, ...]
    path_cond: Term
    cycles: int
    covers: tuple[CoverHit, ...]
    randoms: tuple[tuple[str, int], ...]
    trace: tuple[str, ...]

    def log(self, limits: RunLimits, message: str) -> "Snapshot":
        if len(self.trace) >= limits.max_trace:
            return self
        return replace(self, trace=self.trace + (f"[{self.cycles}] {message}",))


@dataclass(frozen=True)
class ExitPath:
    snap: Snapshot


@dataclass(frozen=True)
class RunOutcome:
    exits: tuple[ExitPath, ...]
    unknown: str | None
    aborted_covers: tuple[CoverHit, ...]  # hits seen on paths that were cut short


@dataclass
class RunStats:
    cycles: int = 0
    saved_cycles: int = 0
    paths: int = 0
    executed: Counter = None  # type: ignore[assignment]
    replayed: Counter = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.executed is None:
            self.executed = Counter()
        if self.replayed is None:
            self.replayed = Counter()


@dataclass(frozen=True)
class _SummaryExit:
    state_items: tuple[tuple[str, object], ...]  # term or tuple of terms, canonical
    pending: tuple[tuple[str, Term | None, Term, Term], ...]
    path_cond: Term
    cycles: int
    covers: tuple[CoverHit, ...]
    randoms: tuple[tuple[str, int, str], ...]  # (canonical name, width, source signal)


class SummaryStore:
    def __init__(self) -> None:
        self.entries: dict[tuple, tuple[_SummaryExit, ...]] = {}

    def get(self, key: tuple) -> tuple[_SummaryExit, ...] | None:
        return self.entries.get(key)

    def put(self, key: tuple, exits: tuple[_SummaryExit, ...]) -> None:
        self.entries[key] = exits


class NullSummaryStore(SummaryStore):
    """Store that never hits, so callee sequences re-execute at every call."""

    def get(self, key: tuple) -> None:
        return None

    def put(self, key: tuple, exits: tuple[_SummaryExit, ...]) -> None:
        pass


class Ctx:
    def __init__(self, design: Design, engine: Engine, limits: RunLimits, summaries: SummaryStore | None = None):
        self.design = design
        self.engine = engine
        self.limits = limits
        self.summaries = summaries if summaries is not None else SummaryStore()
        self.stats = RunStats()
        self.budget_reason: str | None = None
        self.aborted_covers: list[CoverHit] = []
        self.call_stack: tuple[str, ...] = ()
        self._fresh = 0

    def fresh_var(self, flat: str, width: int) -> Term:
        self._fresh += 1
        return terms.var(f"{flat}?{self._fresh}", width)

    def note_path(self) -> None:
        self.stats.paths += 1
        if self.stats.paths > self.limits.max_paths:
            self.budget_reason = f"path budget exceeded ({self.limits.max_paths})"

    def abort(self, snap: Snapshot, reason: str) -> None:
        if self.budget_reason is None:
            self.budget_reason = reason
        self.aborted_covers.extend(snap.covers)


# -- control frames -----------------------------------------------------------

# A frame is ("block", stmts, idx). The control stack never crosses a
# sequence call (calls run as nested interpreter invocations).
Frame = tuple
Stack = tuple


def _block(stmts: tuple) -> Frame:
    return ("block", stmts, 0)


@dataclass(frozen=True)
class StepOut:
    snap: Snapshot
    stack: Stack
    status: str  # "wait" | "done" | "exit" | "goto"
    goto: str = ""


def _advance(stack: Stack) -> Stack:
    _, stmts, idx = stack[-1]
    return stack[:-1] + (("block", stmts, idx + 1),)


def run_block(ctx: Ctx, snap: Snapshot, stack: Stack, in_fork: bool, writes: set[str] | None) -> list[StepOut]:
    """Advance one path until it blocks, finishes its stack, exits, or jumps."""
    work: list[tuple[Snapshot, Stack]] = [(snap, stack)]
    out: list[StepOut] = []
    while work:
        if ctx.budget_reason is not None:
            for snap_w, _ in work:
                ctx.aborted_covers.extend(snap_w.covers)
            break
        snap, stack = work.pop()
        if not stack:
            out.append(StepOut(snap, stack, "done"))
            continue
        _, stmts, idx = stack[-1]
        if idx >= len(stmts):
            work.append((snap, stack[:-1]))
            continue
        stmt = stmts[idx]
        if isinstance(stmt, VAssigns):
            st = snap.st
            for assign in stmt.assigns:
                if writes is not None:
                    writes.add(assign.flat)
                st = ctx.engine.stim_assign(st, assign)
            snap = replace(snap, st=st).log(ctx.limits, f"apply {stmt.name}")
            work.append((snap, _advance(stack)))
        elif isinstance(stmt, VDrive):
            if writes is not None:
                writes.add(stmt.cond)
            snap = replace(snap, st=ctx.engine.stim_drive(snap.st, stmt.cond))
            snap = snap.log(ctx.limits, f"drive {stmt.cond}")
            work.append((snap, _advance(stack)))
        elif isinstance(stmt, VApplyTr):
            if writes is not None:
                writes.update(_tr_targets(stmt.tr))
            st, pending = ctx.engine.stim_apply_tr(snap.st, snap.pending, stmt.tr)
            snap = replace(snap, st=st, pending=pending).log(ctx.limits, f"apply {stmt.tr.name}")
            work.append((snap, _advance(stack)))
        elif isinstance(stmt, VRandom):
            if writes is not None:
                writes.add(stmt.flat)
            fresh = ctx.fresh_var(stmt.flat, stmt.width)
            st = ctx.engine.sim_update(snap.st.set(stmt.flat, fresh))
            snap = replace(
                snap,
                st=st,
                randoms=snap.randoms + ((fresh.name, stmt.width),),
            ).log(ctx.limits, f"random {stmt.flat} -> {fresh.name}")
            work.append((snap, _advance(stack)))
        elif isinstance(stmt, VCover):
            values = tuple(snap.st.get_or(c, terms.FALSE) for c in stmt.conds)
            hit = CoverHit(qual=stmt.qual, conds=values, path_cond=snap.path_cond, cycle=snap.cycles)
            snap = replace(snap, covers=snap.covers + (hit,)).log(ctx.limits, f"cover {stmt.qual}")
            work.append((snap, _advance(stack)))
        elif isinstance(stmt, VWait):
            guard = snap.st.get_or(stmt.cond, terms.FALSE)
            if guard.kind == "const":
                if guard.value:
                    snap = snap.log(ctx.limits, f"wait {stmt.cond}: satisfied")
                    work.append((snap, _advance(stack) + (_block(stmt.body),)))
                else:
                    out.append(StepOut(snap, stack, "wait"))
                continue
            taken = terms.and_(snap.path_cond, guard)
            skipped = terms.and_(snap.path_cond, terms.not_(guard))
            if not (taken.kind == "const" and taken.value == 0):
                ctx.note_path()
                snap_t = replace(snap, path_cond=taken).log(ctx.limits, f"wait {stmt.cond}: assume 1")
                work.append((snap_t, _advance(stack) + (_block(stmt.body),)))
            if not (skipped.kind == "const" and skipped.value == 0):
                snap_s = replace(snap, path_cond=skipped).log(ctx.limits, f"wait {stmt.cond}: assume 0")
                out.append(StepOut(snap_s, stack, "wait"))
        elif isinstance(stmt, VGoto):
            if in_fork:
                raise CompileError("goto is not allowed inside fork branches", stmt.span)
            out.append(StepOut(snap, stack, "goto", goto=stmt.state))
        elif isinstance(stmt, VExit):
            if in_fork:
                raise CompileError("exit is not allowed inside fork branches", stmt.span)
            out.append(StepOut(snap.log(ctx.limits, "exit"), stack, "exit"))
        elif isinstance(stmt, VCallVtr):
            if in_fork:
                raise CompileError("sequence calls are not allowed inside fork branches", stmt.span)
            resumed, unknown = call_vtr(ctx, stmt.qual, snap)
            if unknown is not None and ctx.budget_reason is None:
                ctx.budget_reason = unknown
            for snap_r in resumed:
                work.append((snap_r, _advance(stack)))
        elif isinstance(stmt, VFork):
            for result in _run_fork(ctx, snap, stmt):
                work.append((result, _advance(stack)))
        else:
            raise CompileError(f"unsupported statement {type(stmt).__name__}", stmt.span)
    return out


def _tr_targets(tr) -> set[str]:
    targets: set[str] = set()
    for site in expand_sites(tr):
        if site.assign is not None:
            targets.add(site.assign.flat)
        elif site.cond is not None:
            targets.add(site.cond)
    return targets


def _cycle(ctx: Ctx, snap: Snapshot) -> Snapshot:
    st = ctx.engine.sim_cycle(snap.st, snap.pending)
    ctx.stats.cycles += 1
    return replace(snap, st=st, pending=(), cycles=snap.cycles + 1)


# -- fork ---------------------------------------------------------------------


def _run_fork(ctx: Ctx, snap: Snapshot, stmt: VFork) -> list[Snapshot]:
    """Run branches in lock step until all finish; returns joined snapshots."""
    items: list[tuple[Snapshot, tuple[Stack | None, ...]]] = [
        (snap, tuple((_block(body),) for body in stmt.branches))
    ]
    joined: list[Snapshot] = []
    guard_cycles = 0
    while items:
        if ctx.budget_reason is not None:
            for snap_i, _ in items:
                ctx.aborted_covers.extend(snap_i.covers)
            break
        guard_cycles += 1
        if guard_cycles > ctx.limits.max_cycles * max(1, len(items)) * 4:
            ctx.abort(items[0][0], "fork did not converge within the cycle budget")
            break
        next_items: list[tuple[Snapshot, tuple[Stack | None, ...]]] = []
        for snap_i, branches in items:
            advanced = _advance_branches(ctx, snap_i, branches, stmt)
            for snap_a, branches_a in advanced:
                if all(b is None for b in branches_a):
                    joined.append(snap_a)
                else:
                    if snap_a.cycles + 1 > ctx.limits.max_cycles:
                        ctx.abort(snap_a, f"cycle budget exceeded ({ctx.limits.max_cycles})")
                        continue
                    next_items.append((_cycle(ctx, snap_a), branches_a))
        items = next_items
    return joined


def _advance_branches(
    ctx: Ctx, snap: Snapshot, branches: tuple[Stack | None, ...], stmt: VFork
) -> list[tuple[Snapshot, tuple[Stack | None, ...]]]:
    """Advance every branch to its next blocking point within the current cycle."""
    results: list[tuple[Snapshot, tuple[Stack | None, ...], list[set[str]]]] = [
        (snap, branches, [set() for _ in branches])
    ]
    for i in range(len(branches)):
        expanded: list[tuple[Snapshot, tuple[Stack | None, ...], list[set[str]]]] = []
        for snap_r, branches_r, writes_r in results:
            stack = branches_r[i]
            if stack is None:
                expanded.append((snap_r, branches_r, writes_r))
                continue
            writes: set[str] = set(writes_r[i])
            for out in run_block(ctx, snap_r, stack, in_fork=True, writes=writes):
                new_branches = list(branches_r)
                new_writes = [set(w) for w in writes_r]
                new_writes[i] = writes
                if out.status == "done":
                    new_branches[i] = None
                elif out.status == "wait":
                    new_branches[i] = out.stack
                else:
                    raise CompileError("fork branches may not jump or exit", stmt.span)
                expanded.append((out.snap, tuple(new_branches), new_writes))
        results = expanded
    final: list[tuple[Snapshot, tuple[Stack | None, ...]]] = []
    for snap_r, branches_r, writes_r in results:
        for i in range(len(writes_r)):
            for j in range(i + 1, len(writes_r)):
                clash = writes_r[i] & writes_r[j]
                if clash:
                    name = sorted(clash)[0]
                    raise CompileError(
                        f"fork branches write {name!r} in the same cycle", stmt.span
                    )
        final.append((snap_r, branches_r))
    return final


# -- sequence runs and summaries ------------------------------------------------


def run_vtr(ctx: Ctx, qual: str, snap: Snapshot) -> RunOutcome:
    vtr = ctx.design.vtrs[qual]
    exits: list[ExitPath] = []
    work: list[tuple[Snapshot, Stack]] = [
        (snap.log(ctx.limits, f"enter {qual}"), (_block(vtr.states[vtr.first_state]),))
    ]
    while work:
        if ctx.budget_reason is not None:
            for snap_w, _ in work:
                ctx.aborted_covers.extend(snap_w.covers)
            break
        snap_w, stack = work.pop()
        for out in run_block(ctx, snap_w, stack, in_fork=False, writes=None):
            if out.status == "exit":
                exits.append(ExitPath(out.snap))
            elif out.status == "done":
                raise CompileError(f"a state of {vtr.name} ends without goto or exit", NO_SPAN)
            elif out.status in ("wait", "goto"):
                if out.snap.cycles + 1 > ctx.limits.max_cycles:
                    ctx.abort(out.snap, f"cycle budget exceeded ({ctx.limits.max_cycles})")
                    continue
                advanced = _cycle(ctx, out.snap)
                if out.status == "goto":
                    advanced = advanced.log(ctx.limits, f"goto {out.goto}")
                    work.append((advanced, (_block(vtr.states[out.goto]),)))
                else:
                    work.append((advanced, out.stack))
    return RunOutcome(
        exits=tuple(exits),
        unknown=ctx.budget_reason,
        aborted_covers=tuple(ctx.aborted_covers),
    )


def call_vtr(ctx: Ctx, qual: str, snap: Snapshot) -> tuple[list[Snapshot], str | None]:
    """Run or replay a callee; resume with the caller's bookkeeping merged back."""
    if qual in ctx.call_stack:
        raise CompileError(f"recursive sequence call to {qual}", NO_SPAN)
    entry = snap
    callee_snap = Snapshot(
        st=snap.st,
        pending=snap.pending,
        path_cond=terms.TRUE,
        cycles=0,
        covers=(),
        randoms=(),
        trace=(),
    )
    key, rename = _canonical_key(qual, callee_snap)
    stored = ctx.summaries.get(key)
    if stored is not None:
        ctx.stats.replayed[qual] += 1
        return [_replay_exit(ctx, entry, ex, rename) for ex in stored], None
    saved_stack = ctx.call_stack
    ctx.call_stack = saved_stack + (qual,)
    try:
        outcome = run_vtr(ctx, qual, callee_snap)
    finally:
        ctx.call_stack = saved_stack
    ctx.stats.executed[qual] += 1
    if outcome.unknown is not None:
        for ex in outcome.exits:
            ctx.aborted_covers.extend(_merge_exit(entry, ex.snap).covers)
        return [], outcome.unknown
    ctx.summaries.put(key, tuple(_encode_exit(ex.snap, rename) for ex in outcome.exits))
    return [_merge_exit(entry, ex.snap) for ex in outcome.exits], None


def _merge_exit(entry: Snapshot, exit_snap: Snapshot) -> Snapshot:
    covers = tuple(
        CoverHit(
            qual=h.qual,
            conds=h.conds,
            path_cond=terms.and_(entry.path_cond, h.path_cond),
            cycle=entry.cycles + h.cycle,
        )
        for h in exit_snap.covers
    )
    return Snapshot(
        st=exit_snap.st,
        pending=exit_snap.pending,
        path_cond=terms.and_(entry.path_cond, exit_snap.path_cond),
        cycles=entry.cycles + exit_snap.cycles,
        covers=entry.covers + covers,
        randoms=entry.randoms + exit_snap.randoms,
        trace=entry.trace + exit_snap.trace,
    )


def _canonical_key(qual: str, snap: Snapshot) -> tuple[tuple, dict[str, str]]:
    rename: dict[str, str] = {}
    items = []
    for name, value in snap.st.items():
        if isinstance(value, tuple):
            items.append((name, tuple(terms.serialize(t, rename) for t in value)))
        else:
            items.append((name, terms.serialize(value, rename)))
    pend = tuple(
        (
            w.flat,
            terms.serialize(w.index, rename) if w.index is not None else None,
            terms.serialize(w.value, rename),
            terms.serialize(w.guard, rename),
        )
        for w in snap.pending
    )
    return (qual, tuple(items), pend), rename


def _canonical_env(rename: dict[str, str], widths: dict[str, int]) -> dict[str, Term]:
    # Entry variables that no exit term mentions need no canonical stand-in.
    return {
        actual: terms.var(canon, widths[actual])
        for actual, canon in rename.items()
        if actual in widths
    }


def _encode_exit(snap: Snapshot, rename: dict[str, str]) -> _SummaryExit:
    widths = _var_widths(snap)
    env = _canonical_env(rename, widths)
    for i, (rand_name, width) in enumerate(snap.randoms):
        env[rand_name] = terms.var(f"~r{i}", width)

    def enc(term: Term) -> Term:
        return terms.substitute(term, env)

    state_items = []
    for name, value in snap.st.items():
        if isinstance(value, tuple):
            state_items.append((name, tuple(enc(t) for t in value)))
        else:
            state_items.append((name, enc(value)))
    pending = tuple(
        (w.flat, enc(w.index) if w.index is not None else None, enc(w.value), enc(w.guard))
        for w in snap.pending
    )
    covers = tuple(
        CoverHit(qual=h.qual, conds=tuple(enc(c) for c in h.conds), path_cond=enc(h.path_cond), cycle=h.cycle)
        for h in snap.covers
    )
    randoms = tuple(
        (f"~r{i}", width, name.split("?", 1)[0]) for i, (name, width) in enumerate(snap.randoms)
    )
    return _SummaryExit(
        state_items=tuple(state_items),
        pending=pending,
        path_cond=enc(snap.path_cond),
        cycles=snap.cycles,
        covers=covers,
        randoms=randoms,
    )


def _var_widths(snap: Snapshot) -> dict[str, int]:
    widths: dict[str, int] = {}
    for _, value in snap.st.items():
        for term in value if isinstance(value, tuple) else (value,):
            widths.update(terms.free_vars(term))
    for w in snap.pending:
        for term in (w.index, w.value, w.guard):
            if term is not None:
                widths.update(terms.free_vars(term))
    widths.update(terms.free_vars(snap.path_cond))
    for h in snap.covers:
        for c in h.conds:
            widths.update(terms.free_vars(c))
        widths.update(terms.free_vars(h.path_cond))
    return widths


def _replay_exit(ctx: Ctx, entry: Snapshot, stored: _SummaryExit, rename: dict[str, str]) -> Snapshot:
    env: dict[str, Term] = {}
    widths = _entry_var_widths(entry)
    for actual, canon in rename.items():
        env[canon] = terms.var(actual, widths[actual])
    new_randoms: list[tuple[str, int]] = []
    for canon_name, width, base in stored.randoms:
        fresh = ctx.fresh_var(base, width)
        env[canon_name] = fresh
        new_randoms.append((fresh.name, width))

    def dec(term: Term) -> Term:
        return terms.substitute(term, env)

    entries: dict[str, Term | tuple[Term, ...]] = {}
    for name, value in stored.state_items:
        if isinstance(value, tuple):
            entries[name] = tuple(dec(t) for t in value)
        else:
            entries[name] = dec(value)
    pending = tuple(
        PendingWrite(flat, dec(idx) if idx is not None else None, dec(val), dec(gd))
        for flat, idx, val, gd in stored.pending
    )
    ctx.stats.saved_cycles += stored.cycles
    path_cond = terms.and_(entry.path_cond, dec(stored.path_cond))
    covers = tuple(
        CoverHit(
            qual=h.qual,
            conds=tuple(dec(c) for c in h.conds),
            path_cond=terms.and_(entry.path_cond, dec(h.path_cond)),
            cycle=entry.cycles + h.cycle,
        )
        for h in stored.covers
    )
    return Snapshot(
        st=StateList(entries),
        pending=pending,
        path_cond=path_cond,
        cycles=entry.cycles + stored.cycles,
        covers=entry.covers + covers,
        randoms=entry.randoms + tuple(new_randoms),
        trace=entry.trace + (f"[{entry.cycles}] replayed summary ({stored.cycles} cycles)",),
    )


def _entry_var_widths(entry: Snapshot) -> dict[str, int]:
    widths: dict[str, int] = {}
    for _, value in entry.st.items():
        for term in value if isinstance(value, tuple) else (value,):
            widths.update(terms.free_vars(term))
    for w in entry.pending:
        for term in (w.index, w.value, w.guard):
            if term is not None:
                widths.update(terms.free_vars(term))
    return widths


def initial_snapshot(engine: Engine) -> Snapshot:
    return Snapshot(
        st=engine.reset_state(),
        pending=(),
        path_cond=terms.TRUE,
        cycles=0,
        covers=(),
        randoms=(),
        trace=(),
    )
