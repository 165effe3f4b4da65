"""Symbolic execution of the elaborated design, one clock cycle at a time.

The engine is purely functional over StateList values. A cycle has three
phases: stimulus statements mutate the pre-edge state (immediate writes) and
queue clocked writes, `sim_cycle` commits all clocked writes simultaneously
against the settled pre-edge state, and `sim_update` recomputes the
combinational layer.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import terms
from .design import Design, LoweredTr, Site, expand_sites
from .resolve import LoweredAssign, elem_name
from .source import CompileError
from .state import StateList
from .terms import Term


@dataclass(frozen=True)
class PendingWrite:
    """A clocked write whose value and guard were fixed when it was queued."""

    flat: str
    index: Term | None  # array index, already evaluated
    value: Term
    guard: Term


class Engine:
    def __init__(self, design: Design):
        self.design = design
        self.pulses = [info.flat for info in design.signals.values() if info.klass == "pulse"]
        # hardware clocked sites in application order, with drives as 1-bit writes
        self.hw_plan: list[tuple[Site, str, Term, Term | None]] = []
        for tr in design.hardware_trs:
            for site in expand_sites(tr):
                if not site.registered:
                    continue  # immediate hardware writes are comb equations
                if site.action == "assign":
                    assert site.assign is not None
                    if design.signals[site.assign.flat].klass != "seq":
                        continue  # intermediates became wires
                    self.hw_plan.append((site, site.assign.flat, site.assign.rhs, site.assign.index))
                elif site.action == "drive":
                    assert site.cond is not None
                    self.hw_plan.append((site, site.cond, terms.const(1, 1), None))

    # -- state construction ----------------------------------------------------

    def reset_state(self) -> StateList:
        """All registers, inputs, and stimulus variables start at zero."""
        st = StateList()
        for info in self.design.signals.values():
            if info.klass == "comb":
                continue
            if info.depth is not None:
                zero = terms.const(0, info.width)
                st = st.set(info.flat, tuple(zero for _ in range(info.depth)))
            else:
                st = st.set(info.flat, terms.const(0, info.width))
        return self.sim_update(st)

    # -- evaluation --------------------------------------------------------------

    def eval(self, st: StateList, term: Term) -> Term:
        return terms.substitute(term, st.env())

    def sim_update(self, st: StateList) -> StateList:
        """Recompute the combinational layer in dependency order (idempotent)."""
        env = st.env()
        updates: dict[str, Term] = {}
        for flat in self.design.comb_order:
            value = terms.substitute(self.design.comb_equations[flat], env)
            env[flat] = value
            updates[flat] = value
        return st.set_many(updates)

    # -- stimulus ------------------------------------------------------------------

    def stim_assign(self, st: StateList, assign: LoweredAssign) -> StateList:
        """Apply one immediate stimulus assignment and resettle."""
        env = st.env()
        st = self._write_now(st, env, assign)
        return self.sim_update(st)

    def _write_now(self, st: StateList, env: dict[str, Term], assign: LoweredAssign) -> StateList:
        value = terms.substitute(assign.rhs, env)
        if assign.depth is None:
            return st.set(assign.flat, value)
        assert assign.index is not None
        index = terms.substitute(assign.index, env)
        current = st.get(assign.flat)
        assert isinstance(current, tuple)
        if index.kind == "const":
            return st.set_elem(assign.flat, index.value, value)
        elements = []
        for k, old in enumerate(current):
            if k >> index.width:
                elements.append(old)
                continue
            hit = terms.eq(index, terms.const(k, index.width))
            elements.append(terms.ite(hit, value, old))
        return st.set(assign.flat, tuple(elements))

    def stim_drive(self, st: StateList, flat: str) -> StateList:
        """Pulse a condition for the current cycle."""
        return self.sim_update(st.set(flat, terms.const(1, 1)))

    def stim_apply_tr(
        self, st: StateList, pending: tuple[PendingWrite, ...], tr: LoweredTr
    ) -> tuple[StateList, tuple[PendingWrite, ...]]:
        """Apply a stimulus transaction: immediate writes now, clocked ones queued."""
        queued = list(pending)
        for site in expand_sites(tr):
            env = st.env()
            guard = terms.substitute(site.guard_term(), env)
            if site.action == "drive":
                assert site.cond is not None
                if site.registered:
                    queued.append(PendingWrite(site.cond, None, terms.const(1, 1), guard))
                else:
                    if self.design.signals[site.cond].klass != "pulse":
                        raise CompileError(f"cannot drive non-pulse condition {site.cond!r}", site.span)
                    old = st.get_or(site.cond, terms.FALSE)
                    st = self.sim_update(st.set(site.cond, terms.or_(guard, old)))
                continue
            assert site.assign is not None
            if site.registered:
                value = terms.substitute(site.assign.rhs, env)
                index = terms.substitute(site.assign.index, env) if site.assign.index is not None else None
                queued.append(PendingWrite(site.assign.flat, index, value, guard))
            else:
                if guard.kind == "const" and guard.value == 0:
                    continue
                if guard.kind == "const" and guard.value == 1:
                    st = self._write_now(st, env, site.assign)
                    st = self.sim_update(st)
                else:
                    value = terms.substitute(site.assign.rhs, env)
                    old = st.get(site.assign.flat)
                    if isinstance(old, tuple):
                        raise CompileError(
                            "guarded immediate writes to arrays need a constant guard", site.span
                        )
                    st = self.sim_update(st.set(site.assign.flat, terms.ite(guard, value, old)))
        return st, tuple(queued)

    # -- the clock edge ---------------------------------------------------------

    def sim_cycle(self, st: StateList, pending: tuple[PendingWrite, ...] = ()) -> StateList:
        """Commit queued stimulus and hardware clocked writes simultaneously."""
        st = self.sim_update(st)
        env = st.env()
        overlay: dict[str, Term | tuple[Term, ...]] = {}

        def commit(flat: str, index: Term | None, value: Term, guard: Term) -> None:
            info = self.design.signals[flat]
            base_default = terms.FALSE if info.klass == "pulse" else None
            if info.depth is None:
                prev = overlay.get(flat)
                if prev is None:
                    stored = st.get_or(flat, terms.const(0, info.width)) if base_default is None else base_default
                    prev = stored
                assert not isinstance(prev, tuple)
                overlay[flat] = terms.ite(guard, value, prev)
                return
            prev_arr = overlay.get(flat)
            if prev_arr is None:
                prev_arr = st.get(flat)
            assert isinstance(prev_arr, tuple)
            elements = list(prev_arr)
            if index is None or index.kind == "const":
                k = 0 if index is None else index.value
                elements[k] = terms.ite(guard, value, elements[k])
            else:
                for k, old in enumerate(elements):
                    if k >> index.width:
                        continue
                    hit = terms.and_(guard, terms.eq(index, terms.const(k, index.width)))
                    elements[k] = terms.ite(hit, value, old)
            overlay[flat] = tuple(elements)

        for write in pending:
            commit(write.flat, write.index, write.value, write.guard)
        for site, flat, rhs, index_term in self.hw_plan:
            guard = terms.substitute(site.guard_term(), env)
            if guard.kind == "const" and guard.value == 0:
                continue
            value = terms.substitute(rhs, env)
            index = terms.substitute(index_term, env) if index_term is not None else None
            commit(flat, index, value, guard)
        for flat in self.pulses:
            if flat not in overlay:
                overlay[flat] = terms.FALSE
        return self.sim_update(st.set_many(overlay))
