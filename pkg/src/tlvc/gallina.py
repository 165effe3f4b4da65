"""Coq proof-script generation for elaborated designs and their obligations.

Three Gallina files are produced, in dependency order:

* the base library declares one `t_item` constructor per signal (typed by an
  exact-width bus type), the `t_state` cons-list, and the generic `f_set` /
  `f_get` helpers plus per-width arithmetic helpers;
* the design library turns every condition, datapath, transaction, and
  sequence into a state-to-state function and adds the `sim_update` /
  `sim_cycle` pair and `reset_st`;
* the theorems file states one theorem per proof obligation. Theorems whose
  internal verdict was proved carry an exhaustive case-split script over the
  quantified symbolic values (bounded by the enumeration budget); everything
  else falls back to `Admitted` with a warning.

Bus values are finite inductives with one boolean field per bit, so a
universally quantified bus can be destructed into its 2^w cases and every
goal closes by computation (`vm_compute`). Arithmetic routes through binary
naturals to keep that computation cheap. Sequences become fuel-bounded
program-counter machines; symbolic `random` values are drawn from a stream
that the enclosing theorem universally quantifies, one bus per draw.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import terms
from .design import (
    Design,
    LoweredTr,
    LoweredVtr,
    Site,
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
from .engine import Engine
from .obligations import ProveReport
from .prove import DEFAULT_BUDGET_BITS
from .resolve import LoweredAssign
from .seqrun import RunLimits
from .terms import Term

BASE_FILE = "tlvc_base.v"
DESIGN_FILE = "tlvc_design.v"
THEOREMS_FILE = "tlvc_theorems.v"
PROJECT_FILE = "_CoqProject"

_COQ_RESERVED = frozenset(
    """

    as at cofix else end exists fix for forall fun if in let match mod return
    then where with Definition Fixpoint Inductive Theorem Lemma Prop Set Type
    Qed Admitted Proof Require Import Export Local Open Scope bool nat true
    false N prod pair fst snd list nil cons app hd tl andb orb negb
    """.split()
)


# every bound variable the generators introduce matches this shape, so
# generated global names must never collide with it
_BINDER = re.compile(r"q(st|fuel|pc|rnds|ps|f|p|r|n|k|idx|v|g|a|b|s|l|it|rest|rs|fl)\d*|q[ebgvxr]\d+(b\d+)?|qst\d+|qps\d+")


class _Names:
    """A single deterministic namespace for everything the files define."""

    def __init__(self) -> None:
        self.taken: set[str] = set()
        self.order: list[str] = []

    def reserve(self, *candidates: str) -> str:
        for cand in candidates:
            name = self._clean(cand)
            if name not in self.taken:
                self.taken.add(name)
                self.order.append(name)
                return name
        base = self._clean(candidates[-1])
        n = 2
        while f"{base}_{n}" in self.taken:
            n += 1
        name = f"{base}_{n}"
        self.taken.add(name)
        self.order.append(name)
        return name

    @staticmethod
    def _clean(name: str) -> str:
        name = name.replace("/", "_")
        if name in _COQ_RESERVED or not name or _BINDER.fullmatch(name):
            name = "x_" + name
        return name


@dataclass(frozen=True)
class GallinaEmission:
    files: dict[str, str]  # file name -> text, in dependency order
    warnings: tuple[str, ...]


# -- term rendering over binary naturals --------------------------------------


class _Gen:
    def __init__(self, design: Design, limits: RunLimits | None = None):
        self.design = design
        self.limits = limits or RunLimits()
        self.names = _Names()
        self.engine = Engine(design)
        self.signals = list(design.signals.values())
        self.widths = sorted({1} | {info.width for info in self.signals})
        self.shapes = sorted(
            {(info.width, info.depth) for info in self.signals if info.depth is not None}
        )
        self.covers = sorted(design.covers)

        short_counts: dict[str, int] = {}
        for info in self.signals:
            short_counts[info.name] = short_counts.get(info.name, 0) + 1

        # fixed helper names first so user identifiers can never shadow them
        for fixed in (
            "t_item",
            "i_nil",
            "t_state",
            "st_nil",
            "st_cons",
            "f_item_same",
            "f_set",
            "f_get",
            "f_is_true1",
            "t_pwrite",
            "mk_pw",
            "t_run",
            "mk_run",
            "run_st",
            "run_rnds",
            "run_pend",
            "f_commit",
            "f_commit_all",
            "f_clear_pulses",
            "sim_update",
            "sim_cycle_pend",
            "sim_cycle",
            "two_cycles",
            "reset_st",
        ):
            assert self.names.reserve(fixed) == fixed
        for w in self.widths:
            for pat in ("t_bus{0}", "mk_bus{0}", "f_bus{0}_of_n", "f_bus{0}_to_n", "f_equal{0}", "f_add{0}"):
                self.names.reserve(pat.format(w))
        for w, d in self.shapes:
            for pat in (
                "t_arr{0}x{1}",
                "mk_arr{0}x{1}",
                "f_arr{0}x{1}_zero",
                "f_arr{0}x{1}_get",
                "f_arr{0}x{1}_set",
            ):
                self.names.reserve(pat.format(w, d))

        # item constructors and per-signal accessors
        self.ctor: dict[str, str] = {}
        self.getter: dict[str, str] = {}
        self.setter: dict[str, str] = {}
        for info in self.signals:
            short = info.name if short_counts[info.name] == 1 else info.flat
            if info.is_condition:
                name = self.names.reserve("v_" + short, "v_" + info.flat)
            else:
                name = self.names.reserve(short, info.flat)
            self.ctor[info.flat] = name
            self.getter[info.flat] = self.names.reserve("f_get_" + name)
            self.setter[info.flat] = self.names.reserve("f_set_" + name)
        self.cover_hit: dict[str, str] = {}
        self.cover_ok: dict[str, str] = {}
        for cp in self.covers:
            self.cover_hit[cp] = self.names.reserve(cp + "_hit")
            self.cover_ok[cp] = self.names.reserve(cp + "_ok")
            self.getter[self.cover_hit[cp]] = self.names.reserve("f_get_" + self.cover_hit[cp])
            self.setter[self.cover_hit[cp]] = self.names.reserve("f_set_" + self.cover_hit[cp])
            self.getter[self.cover_ok[cp]] = self.names.reserve("f_get_" + self.cover_ok[cp])
            self.setter[self.cover_ok[cp]] = self.names.reserve("f_set_" + self.cover_ok[cp])

        # design-library definition names
        self.comb_def: dict[str, str] = {}
        for flat in design.comb_order:
            info = design.signals[flat]
            short = info.name if short_counts[info.name] == 1 else info.flat
            if info.is_condition:
                self.comb_def[flat] = self.names.reserve(short, info.flat)
            else:
                self.comb_def[flat] = self.names.reserve("u_" + short, "u_" + info.flat)
        self.dp_def: dict[str, str] = {}
        for qual in design.datapaths:
            self.dp_def[qual] = self.names.reserve(qual.rsplit("/", 1)[-1], qual)
        self.tr_def: dict[str, str] = {}
        for tr in list(design.hardware_trs) + list(design.stimulus_trs.values()):
            self.tr_def[tr.qual] = self.names.reserve(tr.qual.rsplit("/", 1)[-1], tr.qual)
        self.vtr_def: dict[str, str] = {}
        for qual in design.vtrs:
            self.vtr_def[qual] = self.names.reserve(qual.rsplit("/", 1)[-1], qual)
        self.cp_def: dict[str, str] = {}
        for cp in self.covers:
            self.cp_def[cp] = self.names.reserve(cp)

        self.signal_ids = {info.flat: i for i, info in enumerate(self.signals)}
        self.fork_poisoned = self._poisoned_vtrs()
        self.layouts = {qual: self._layout(vtr) for qual, vtr in design.vtrs.items()}
        total_slots = sum(len(lay[0]) for lay in self.layouts.values())
        self.fuel = (self.limits.max_cycles + 2) * (total_slots + 2)
        self.warnings: list[str] = []

    # -- shared rendering helpers ---------------------------------------------

    def _bus(self, width: int) -> str:
        return f"t_bus{width}"

    def _of_n(self, width: int, expr: str) -> str:
        return f"( f_bus{width}_of_n {expr} )"

    def _to_n(self, width: int, expr: str) -> str:
        return f"( f_bus{width}_to_n {expr} )"

    def _get(self, flat: str, st: str) -> str:
        return f"( {self.getter[flat]} {st} )"

    def _set(self, flat: str, value: str, st: str) -> str:
        return f"( {self.setter[flat]} {value} {st} )"

    def _pow2(self, bits: int) -> str:
        return f"{1 << bits}%N"

    def _n(self, t: Term, st: str) -> str:
        """Render a term as an expression of type N over the state `st`."""
        k = t.kind
        if k == "const":
            return f"{t.value}%N"
        if k == "var":
            name = t.name
            if name.endswith("]") and "[" in name:
                base, idx = name[:-1].rsplit("[", 1)
                info = self.design.signals[base]
                elem = f"( f_arr{info.width}x{info.depth}_get {int(idx)} {self._get(base, st)} )"
                return self._to_n(info.width, elem)
            return self._to_n(t.width, self._get(name, st))
        if k in ("and", "or", "xor"):
            op = {"and": "N.land", "or": "N.lor", "xor": "N.lxor"}[k]
            out = self._n(t.args[0], st)
            for a in t.args[1:]:
                out = f"( {op} {out} {self._n(a, st)} )"
            return out
        if k == "add":
            out = self._n(t.args[0], st)
            for a in t.args[1:]:
                out = f"( N.add {out} {self._n(a, st)} )"
            return f"( N.modulo {out} {self._pow2(t.width)} )"
        if k == "sub":
            a, b = self._n(t.args[0], st), self._n(t.args[1], st)
            return f"( N.modulo ( N.add {a} ( N.sub {self._pow2(t.width)} {b} ) ) {self._pow2(t.width)} )"
        if k == "not":
            return f"( N.sub {(1 << t.width) - 1}%N {self._n(t.args[0], st)} )"
        if k == "eq":
            a, b = self._n(t.args[0], st), self._n(t.args[1], st)
            return f"( if N.eqb {a} {b} then 1%N else 0%N )"
        if k == "lt":
            a, b = self._n(t.args[0], st), self._n(t.args[1], st)
            return f"( if N.ltb {a} {b} then 1%N else 0%N )"
        if k == "shl":
            a, b = self._n(t.args[0], st), self._n(t.args[1], st)
            shift = f"( N.pow 2%N ( N.min {b} {t.width}%N ) )"
            return f"( N.modulo ( N.mul {a} {shift} ) {self._pow2(t.width)} )"
        if k == "shr":
            a, b = self._n(t.args[0], st), self._n(t.args[1], st)
            return f"( N.div {a} ( N.pow 2%N ( N.min {b} {t.args[0].width}%N ) ) )"
        if k == "select":
            a = self._n(t.args[0], st)
            return f"( N.modulo ( N.div {a} {self._pow2(t.lo)} ) {self._pow2(t.width)} )"
        if k == "concat":
            out = self._n(t.args[0], st)
            for a in t.args[1:]:
                out = f"( N.add ( N.mul {out} {self._pow2(a.width)} ) {self._n(a, st)} )"
            return out
        if k == "ite":
            c = self._n(t.args[0], st)
            a, b = self._n(t.args[1], st), self._n(t.args[2], st)
            return f"( if N.eqb {c} 0%N then {b} else {a} )"
        raise ValueError(f"cannot render term kind {k!r}")

    def _truth(self, flat: str, st: str) -> str:
        return f"( f_is_true1 {self._get(flat, st)} )"

    # -- base library -----------------------------------------------------------

    def base_library(self) -> str:
        out: list[str] = []
        top = self.design.root.name if self.design.root else "design"
        out.append(f"(* State library for design {top}. Generated; do not edit. *)")
        out.append("")
        out.append("Require Import Coq.Bool.Bool.")
        out.append("Require Import Coq.NArith.NArith.")
        out.append("Require Import Coq.Lists.List.")
        out.append("")
        for w in self.widths:
            fields = " ".join(f"qb{i}" for i in range(w))
            out.append(f"Inductive t_bus{w} : Type :=")
            out.append(f"  | mk_bus{w} ( {fields} : bool ).")
            out.append("")
            chain = "qn"
            bits = []
            for _ in range(w):
                bits.append(f"( N.odd {chain} )")
                chain = f"( N.div2 {chain} )"
            out.append(f"Definition f_bus{w}_of_n ( qn : N ) : t_bus{w} :=")
            out.append(f"  mk_bus{w} {' '.join(bits)}.")
            out.append("")
            acc = "0%N"
            for i in reversed(range(w)):
                acc = f"( N.add ( if qb{i} then 1%N else 0%N ) ( N.mul 2%N {acc} ) )"
            out.append(f"Definition f_bus{w}_to_n ( qv : t_bus{w} ) : N :=")
            out.append(f"  match qv with mk_bus{w} {fields} => {acc} end.")
            out.append("")
            out.append(f"Definition f_equal{w} ( qa qb : t_bus{w} ) : bool :=")
            out.append(f"  N.eqb ( f_bus{w}_to_n qa ) ( f_bus{w}_to_n qb ).")
            out.append("")
            out.append(f"Definition f_add{w} ( qa qb : t_bus{w} ) : t_bus{w} :=")
            out.append(f"  f_bus{w}_of_n ( N.add ( f_bus{w}_to_n qa ) ( f_bus{w}_to_n qb ) ).")
            out.append("")
        out.append("Definition f_is_true1 ( qv : t_bus1 ) : bool :=")
        out.append("  match qv with mk_bus1 qb => qb end.")
        out.append("")
        for w, d in self.shapes:
            fields = " ".join(f"qe{i}" for i in range(d))
            out.append(f"Inductive t_arr{w}x{d} : Type :=")
            out.append(f"  | mk_arr{w}x{d} ( {fields} : t_bus{w} ).")
            out.append("")
            zeros = " ".join(f"( f_bus{w}_of_n 0%N )" for _ in range(d))
            out.append(f"Definition f_arr{w}x{d}_zero : t_arr{w}x{d} := mk_arr{w}x{d} {zeros}.")
            out.append("")
            out.append(f"Definition f_arr{w}x{d}_get ( qk : nat ) ( qa : t_arr{w}x{d} ) : t_bus{w} :=")
            out.append(f"  match qa with mk_arr{w}x{d} {fields} =>")
            arms = " ".join(f"| {i} => qe{i}" for i in range(d))
            out.append(f"    match qk with {arms} | _ => f_bus{w}_of_n 0%N end")
            out.append("  end.")
            out.append("")
            out.append(
                f"Definition f_arr{w}x{d}_set ( qk : nat ) ( qv : t_bus{w} ) ( qa : t_arr{w}x{d} ) : t_arr{w}x{d} :="
            )
            out.append(f"  match qa with mk_arr{w}x{d} {fields} =>")
            sets = []
            for i in range(d):
                elems = " ".join("qv" if j == i else f"qe{j}" for j in range(d))
                sets.append(f"| {i} => mk_arr{w}x{d} {elems}")
            out.append(f"    match qk with {' '.join(sets)} | _ => qa end")
            out.append("  end.")
            out.append("")

        out.append("Inductive t_item : Type :=")
        lines = ["  | i_nil"]
        for info in self.signals:
            ty = f"t_arr{info.width}x{info.depth}" if info.depth is not None else self._bus(info.width)
            lines.append(f"  | {self.ctor[info.flat]} ( ql : {ty} )")
        for cp in self.covers:
            lines.append(f"  | {self.cover_hit[cp]} ( ql : t_bus1 )")
            lines.append(f"  | {self.cover_ok[cp]} ( ql : t_bus1 )")
        out.append("\n".join(lines) + ".")
        out.append("")
        out.append("Inductive t_state : Type :=")
        out.append("  | st_nil")
        out.append("  | st_cons ( qs : t_item ) ( ql : t_state ).")
        out.append("")

        ctors = [self.ctor[info.flat] for info in self.signals]
        for cp in self.covers:
            ctors.extend((self.cover_hit[cp], self.cover_ok[cp]))
        out.append("Definition f_item_same ( qa qb : t_item ) : bool :=")
        if ctors:
            out.append("  match qa, qb with")
            out.append("  | i_nil, i_nil => true")
            for name in ctors:
                out.append(f"  | {name} _, {name} _ => true")
            out.append("  | _, _ => false")
            out.append("  end.")
        else:
            out.append("  match qa, qb with i_nil, i_nil => true end.")
        out.append("")
        out.append("Fixpoint f_set ( qit : t_item ) ( qst : t_state ) : t_state :=")
        out.append("  match qst with")
        out.append("  | st_nil => st_cons qit st_nil")
        out.append("  | st_cons qs ql =>")
        out.append("      if f_item_same qit qs then st_cons qit ql else st_cons qs ( f_set qit ql )")
        out.append("  end.")
        out.append("")
        out.append("Fixpoint f_get ( qit : t_item ) ( qst : t_state ) : t_item :=")
        out.append("  match qst with")
        out.append("  | st_nil => qit")
        out.append("  | st_cons qs ql => if f_item_same qit qs then qs else f_get qit ql")
        out.append("  end.")
        out.append("")

        def accessor(key: str, ctor: str, ty: str, zero: str) -> None:
            out.append(f"Definition {self.getter[key]} ( qst : t_state ) : {ty} :=")
            out.append(f"  match f_get ( {ctor} {zero} ) qst with")
            out.append(f"  | {ctor} ql => ql")
            out.append(f"  | _ => {zero}")
            out.append("  end.")
            out.append("")
            out.append(f"Definition {self.setter[key]} ( qv : {ty} ) ( qst : t_state ) : t_state :=")
            out.append(f"  f_set ( {ctor} qv ) qst.")
            out.append("")

        for info in self.signals:
            ctor = self.ctor[info.flat]
            if info.depth is not None:
                accessor(info.flat, ctor, f"t_arr{info.width}x{info.depth}", f"f_arr{info.width}x{info.depth}_zero")
            else:
                accessor(info.flat, ctor, self._bus(info.width), f"( f_bus{info.width}_of_n 0%N )")
        for cp in self.covers:
            accessor(self.cover_hit[cp], self.cover_hit[cp], "t_bus1", "( f_bus1_of_n 0%N )")
            accessor(self.cover_ok[cp], self.cover_ok[cp], "t_bus1", "( f_bus1_of_n 0%N )")

        out.append("Inductive t_pwrite : Type :=")
        out.append("  | mk_pw ( qk : nat ) ( qidx : N ) ( qv : N ) ( qg : N ).")
        out.append("")
        out.append("Inductive t_run : Type :=")
        out.append("  | mk_run ( qst : t_state ) ( qrnds : list N ) ( qps : list t_pwrite ) ( qfl : nat ).")
        out.append("")
        out.append("Definition run_st ( qr : t_run ) : t_state :=")
        out.append("  match qr with mk_run qs _ _ _ => qs end.")
        out.append("")
        out.append("Definition run_rnds ( qr : t_run ) : list N :=")
        out.append("  match qr with mk_run _ qrs _ _ => qrs end.")
        out.append("")
        out.append("Definition run_pend ( qr : t_run ) : list t_pwrite :=")
        out.append("  match qr with mk_run _ _ qps _ => qps end.")
        out.append("")
        out.append("Definition f_commit ( qk : nat ) ( qidx qv : N ) ( qst : t_state ) : t_state :=")
        if self.signals:
            out.append("  match qk with")
            for i, info in enumerate(self.signals):
                if info.depth is not None:
                    new = (
                        f"( f_arr{info.width}x{info.depth}_set ( N.to_nat qidx ) "
                        f"{self._of_n(info.width, 'qv')} {self._get(info.flat, 'qst')} )"
                    )
                else:
                    new = self._of_n(info.width, "qv")
                out.append(f"  | {i} => {self._set(info.flat, new, 'qst')}")
            out.append("  | _ => qst")
            out.append("  end.")
        else:
            out.append("  qst.")
        out.append("")
        out.append("Fixpoint f_commit_all ( qps : list t_pwrite ) ( qst : t_state ) : t_state :=")
        out.append("  match qps with")
        out.append("  | nil => qst")
        out.append("  | cons ( mk_pw qk qidx qv qg ) qrest =>")
        out.append("      f_commit_all qrest ( if N.eqb qg 0%N then qst else f_commit qk qidx qv qst )")
        out.append("  end.")
        out.append("")
        return "\n".join(out) + "\n"

    # -- design library -----------------------------------------------------------

    def _apply_assigns(self, assigns: tuple[LoweredAssign, ...], st: str, out: list[str], indent: str) -> str:
        """Emit let-steps applying stimulus assignments one at a time."""
        for assign in assigns:
            nxt = self._fresh_st(st)
            if assign.depth is None:
                value = self._of_n(assign.width, self._n(assign.rhs, st))
                out.append(f"{indent}let {nxt} := sim_update {self._set(assign.flat, value, st)} in")
            else:
                assert assign.index is not None
                info = self.design.signals[assign.flat]
                idx = f"( N.to_nat {self._n(assign.index, st)} )"
                value = self._of_n(assign.width, self._n(assign.rhs, st))
                new = f"( f_arr{info.width}x{info.depth}_set {idx} {value} {self._get(assign.flat, st)} )"
                out.append(f"{indent}let {nxt} := sim_update {self._set(assign.flat, new, st)} in")
            st = nxt
        return st

    def _fresh_st(self, prev: str) -> str:
        if prev in ("qst", "qst0"):
            return "qst1" if prev == "qst0" else "qst0"
        return f"qst{int(prev[3:]) + 1}"

    def _registered_writes(self, sites: list[Site]) -> list[tuple[Site, str, Term, Term | None]]:
        """The clocked writes of a transaction, exactly as the engine plans them."""
        plan: list[tuple[Site, str, Term, Term | None]] = []
        for site in sites:
            if not site.registered:
                continue
            if site.action == "assign":
                assert site.assign is not None
                if self.design.signals[site.assign.flat].klass != "seq":
                    continue
                plan.append((site, site.assign.flat, site.assign.rhs, site.assign.index))
            elif site.action == "drive":
                assert site.cond is not None
                plan.append((site, site.cond, terms.const(1, 1), None))
        return plan

    def _emit_clocked(self, plan, pre: str, cur: str, out: list[str], indent: str) -> str:
        """Conditional commits of a clocked plan: values read from `pre`,
        targets folded left to right onto `cur` (a later site wins)."""
        for i, (site, flat, rhs, index) in enumerate(plan):
            g, v = f"qg{i}", f"qv{i}"
            out.append(f"{indent}let {g} := {self._n(site.guard_term(), pre)} in")
            out.append(f"{indent}let {v} := {self._n(rhs, pre)} in")
            info = self.design.signals[flat]
            if info.depth is not None:
                assert index is not None
                out.append(f"{indent}let qx{i} := {self._n(index, pre)} in")
                new = (
                    f"( f_arr{info.width}x{info.depth}_set ( N.to_nat qx{i} ) "
                    f"{self._of_n(info.width, v)} {self._get(flat, cur)} )"
                )
            else:
                new = self._of_n(info.width, v)
            nxt = self._fresh_st(cur)
            out.append(
                f"{indent}let {nxt} := ( if N.eqb {g} 0%N then {cur} else {self._set(flat, new, cur)} ) in"
            )
            cur = nxt
        return cur

    def design_library(self) -> str:
        d = self.design
        out: list[str] = []
        top = d.root.name if d.root else "design"
        out.append(f"(* Behaviour library for design {top}. Generated; do not edit. *)")
        out.append("")
        out.append("Require Import Coq.Bool.Bool.")
        out.append("Require Import Coq.NArith.NArith.")
        out.append("Require Import Coq.Lists.List.")
        out.append(f"From tlvc Require Import {BASE_FILE[:-2]}.")
        out.append("")

        # one definition per combinational signal, conditions under their own name
        for flat in d.comb_order:
            name = self.comb_def[flat]
            info = d.signals[flat]
            value = self._of_n(info.width, self._n(d.comb_equations[flat], "qst"))
            out.append(f"Definition {name} ( qst : t_state ) : t_state :=")
            out.append(f"  {self._set(flat, value, 'qst')}.")
            out.append("")
        chain = "qst"
        for flat in d.comb_order:
            chain = f"( {self.comb_def[flat]} {chain} )"
        out.append("Definition sim_update ( qst : t_state ) : t_state :=")
        out.append(f"  {chain}.")
        out.append("")

        # the clock edge: queued stimulus writes first, then the hardware plan
        out.append("Definition sim_cycle_pend ( qps : list t_pwrite ) ( qst : t_state ) : t_state :=")
        out.append("  let qst0 := sim_update qst in")
        pulse_chain = "qst0"
        for info in self.signals:
            if info.klass == "pulse":
                pulse_chain = self._set(info.flat, "( f_bus1_of_n 0%N )", pulse_chain)
        out.append(f"  let qst1 := f_commit_all qps {pulse_chain} in")
        plan = [(site, flat, rhs, idx) for site, flat, rhs, idx in self.engine.hw_plan]
        cur = self._emit_clocked(plan, "qst0", "qst1", out, "  ")
        out.append(f"  sim_update {cur}.")
        out.append("")
        out.append("Definition sim_cycle ( qst : t_state ) : t_state :=")
        out.append("  sim_cycle_pend nil qst.")
        out.append("")
        out.append("Definition two_cycles ( qst : t_state ) : t_state :=")
        out.append("  sim_cycle ( sim_cycle qst ).")
        out.append("")

        # one definition per datapath: assignments applied in order
        for qual in d.datapaths:
            out.append(f"Definition {self.dp_def[qual]} ( qst : t_state ) : t_state :=")
            body: list[str] = []
            last = self._apply_assigns(d.datapaths[qual], "qst", body, "  ")
            out.extend(body)
            out.append(f"  {last}.")
            out.append("")

        # one definition per transaction
        for tr in d.hardware_trs:
            out.append(f"Definition {self.tr_def[tr.qual]} ( qst : t_state ) : t_state :=")
            out.append("  let qst0 := sim_update qst in")
            plan = self._registered_writes(expand_sites(tr))
            cur = self._emit_clocked(plan, "qst0", "qst0", out, "  ")
            out.append(f"  sim_update {cur}.")
            out.append("")
        for tr in d.stimulus_trs.values():
            out.extend(self._stimulus_tr(tr))
            out.append("")

        # the reset state: every register, input, and variable at zero
        out.append("Definition reset_st : t_state :=")
        chain = "st_nil"
        for info in self.signals:
            if info.klass == "comb":
                continue
            if info.depth is not None:
                chain = self._set(info.flat, f"f_arr{info.width}x{info.depth}_zero", chain)
            else:
                chain = self._set(info.flat, f"( f_bus{info.width}_of_n 0%N )", chain)
        for cp in self.covers:
            chain = f"( {self.setter[self.cover_hit[cp]]} ( f_bus1_of_n 0%N ) {chain} )"
            chain = f"( {self.setter[self.cover_ok[cp]]} ( f_bus1_of_n 1%N ) {chain} )"
        out.append(f"  sim_update {chain}.")
        out.append("")

        # one machine per sequence, callees before callers
        for qual in self._vtr_order():
            out.extend(self._vtr_machine(qual))
            out.append("")
        return "\n".join(out) + "\n"

    def _stimulus_tr(self, tr: LoweredTr) -> list[str]:
        out = [
            f"Definition {self.tr_def[tr.qual]} ( qps : list t_pwrite ) ( qst : t_state )"
            " : prod t_state ( list t_pwrite ) :="
        ]
        st, ps = "qst", "qps"
        k = 0
        for site in expand_sites(tr):
            guard = self._n(site.guard_term(), st)
            if site.registered:
                if site.action == "drive":
                    assert site.cond is not None
                    item = f"( mk_pw {self.signal_ids[site.cond]} 0%N 1%N {guard} )"
                else:
                    assert site.assign is not None
                    idx = self._n(site.assign.index, st) if site.assign.index is not None else "0%N"
                    value = self._n(site.assign.rhs, st)
                    item = f"( mk_pw {self.signal_ids[site.assign.flat]} {idx} {value} {guard} )"
                nxt = f"qps{k}"
                out.append(f"  let {nxt} := app {ps} ( cons {item} nil ) in")
                ps = nxt
                k += 1
                continue
            if site.action == "drive":
                assert site.cond is not None
                old = self._to_n(1, self._get(site.cond, st))
                value = self._of_n(1, f"( N.lor {guard} {old} )")
                nxt = self._fresh_st(st)
                out.append(f"  let {nxt} := sim_update {self._set(site.cond, value, st)} in")
                st = nxt
                continue
            assert site.assign is not None
            assign = site.assign
            info = self.design.signals[assign.flat]
            nxt = self._fresh_st(st)
            if info.depth is None:
                old = self._to_n(info.width, self._get(assign.flat, st))
                picked = f"( if N.eqb {guard} 0%N then {old} else {self._n(assign.rhs, st)} )"
                out.append(
                    f"  let {nxt} := sim_update {self._set(assign.flat, self._of_n(info.width, picked), st)} in"
                )
            else:
                assert assign.index is not None
                idx = f"( N.to_nat {self._n(assign.index, st)} )"
                value = self._of_n(info.width, self._n(assign.rhs, st))
                new = f"( f_arr{info.width}x{info.depth}_set {idx} {value} {self._get(assign.flat, st)} )"
                written = f"( sim_update {self._set(assign.flat, new, st)} )"
                out.append(f"  let {nxt} := ( if N.eqb {guard} 0%N then {st} else {written} ) in")
            st = nxt
        out.append(f"  ( pair {st} {ps} ).")
        return out

    # -- sequence machines -------------------------------------------------------

    def _poisoned_vtrs(self) -> set[str]:
        """Sequences the proof backend cannot compile (forks), plus callers."""
        def has_fork(body) -> bool:
            for stmt in body:
                if isinstance(stmt, VFork):
                    return True
                if isinstance(stmt, VWait) and has_fork(stmt.body):
                    return True
            return False

        direct = {
            qual
            for qual, vtr in self.design.vtrs.items()
            if any(has_fork(body) for body in vtr.states.values())
        }
        poisoned = set(direct)
        changed = True
        while changed:
            changed = False
            for qual, vtr in self.design.vtrs.items():
                if qual in poisoned:
                    continue
                if any(c in poisoned for c in self._callees(vtr)):
                    poisoned.add(qual)
                    changed = True
        return poisoned

    def _callees(self, vtr: LoweredVtr) -> set[str]:
        found: set[str] = set()

        def walk(body) -> None:
            for stmt in body:
                if isinstance(stmt, VCallVtr):
                    found.add(stmt.qual)
                elif isinstance(stmt, VWait):
                    walk(stmt.body)
                elif isinstance(stmt, VFork):
                    for branch in stmt.branches:
                        walk(branch)

        for body in vtr.states.values():
            walk(body)
        return found

    def _vtr_order(self) -> list[str]:
        order: list[str] = []
        seen: set[str] = set()

        def visit(qual: str, stack: tuple[str, ...]) -> None:
            if qual in seen or qual in stack:
                return
            for callee in sorted(self._callees(self.design.vtrs[qual])):
                visit(callee, stack + (qual,))
            seen.add(qual)
            order.append(qual)

        for qual in self.design.vtrs:
            visit(qual, ())
        return order

    def _layout(self, vtr: LoweredVtr):
        """Assign one program-counter slot per statement. Returns
        (slots, state_pc, entry_pc, dangle_pc); each slot is (stmt, next_pc,
        body_pc) with pcs resolved against the final table."""
        slots: list[list] = []

        def lay(body, cont: int | None) -> int | None:
            idxs = [len(slots) + i for i in range(len(body))]
            for _ in body:
                slots.append([None, None, None])
            for i, stmt in enumerate(body):
                nxt = idxs[i + 1] if i + 1 < len(body) else cont
                body_pc = None
                if isinstance(stmt, VWait):
                    body_pc = lay(stmt.body, nxt)
                slots[idxs[i]] = [stmt, nxt, body_pc]
            return idxs[0] if idxs else cont

        state_pc: dict[str, int | None] = {}
        for name, body in vtr.states.items():
            state_pc[name] = lay(body, None)
        dangle = len(slots)
        resolved = {name: (pc if pc is not None else dangle) for name, pc in state_pc.items()}
        entry = resolved[vtr.first_state]
        return slots, resolved, entry, dangle

    def _vtr_machine(self, qual: str) -> list[str]:
        vtr = self.design.vtrs[qual]
        name = self.vtr_def[qual]
        sig = (
            f"( qfuel qpc : nat ) ( qrnds : list N ) ( qps : list t_pwrite )"
            f" ( qst : t_state ) : t_run"
        )
        if qual in self.fork_poisoned:
            self.warnings.append(f"{qual}: fork composition is not supported by the proof backend")
            return [
                f"(* {qual} uses fork; the proof backend cannot compile it. *)",
                f"Definition {name} {sig} :=",
                "  mk_run qst qrnds qps qfuel.",
            ]
        slots, state_pc, entry, dangle = self.layouts[qual]
        out = [f"(* sequence {qual}: entry pc {entry} *)"]
        out.append(f"Fixpoint {name} {sig} :=")
        out.append("  match qfuel with")
        out.append("  | O => mk_run qst qrnds qps O")
        out.append("  | S qf =>")
        out.append("    match qpc with")
        for pc, (stmt, nxt, body_pc) in enumerate(slots):
            out.extend(self._slot(name, pc, stmt, nxt, body_pc, state_pc, dangle))
        out.append("    | _ => mk_run qst qrnds qps O")
        out.append("    end")
        out.append("  end.")
        return out

    def _step(self, name: str, pc: int | None, dangle: int, rnds="qrnds", ps="qps", st="qst") -> str:
        target = dangle if pc is None else pc
        return f"{name} qf {target} {rnds} {ps} {st}"

    def _slot(self, name, pc, stmt, nxt, body_pc, state_pc, dangle) -> list[str]:
        pad = "    "
        if isinstance(stmt, VAssigns):
            body: list[str] = []
            last = self._apply_assigns(stmt.assigns, "qst", body, pad + "    ")
            lines = [f"{pad}| {pc} => (* {stmt.name} *)"]
            lines.extend(body)
            lines.append(f"{pad}    {self._step(name, nxt, dangle, st=last)}")
            return lines
        if isinstance(stmt, VDrive):
            drive = f"( sim_update {self._set(stmt.cond, '( f_bus1_of_n 1%N )', 'qst')} )"
            return [f"{pad}| {pc} => {self._step(name, nxt, dangle, st=drive)}"]
        if isinstance(stmt, VApplyTr):
            fn = self.tr_def[stmt.tr.qual]
            return [
                f"{pad}| {pc} =>",
                f"{pad}    let qp := {fn} qps qst in",
                f"{pad}    {self._step(name, nxt, dangle, ps='( snd qp )', st='( fst qp )')}",
            ]
        if isinstance(stmt, VRandom):
            drawn = self._of_n(stmt.width, "( hd 0%N qrnds )")
            st = f"( sim_update {self._set(stmt.flat, drawn, 'qst')} )"
            return [
                f"{pad}| {pc} => (* random {stmt.flat} *)",
                f"{pad}    {self._step(name, nxt, dangle, rnds='( tl qrnds )', st=st)}",
            ]
        if isinstance(stmt, VCover):
            hit = self.cover_hit[stmt.qual]
            ok = self.cover_ok[stmt.qual]
            conj = "1%N"
            for cond in stmt.conds:
                conj = f"( N.land {conj} {self._to_n(1, self._get(cond, 'qst'))} )"
            old = f"( f_bus1_to_n ( {self.getter[ok]} qst ) )"
            marked = f"( {self.setter[hit]} ( f_bus1_of_n 1%N ) qst )"
            checked = f"( {self.setter[ok]} ( f_bus1_of_n ( N.land {old} {conj} ) ) {marked} )"
            return [
                f"{pad}| {pc} => (* cover {stmt.qual} *)",
                f"{pad}    {self._step(name, nxt, dangle, st=checked)}",
            ]
        if isinstance(stmt, VWait):
            cycled = "( sim_cycle_pend qps qst )"
            return [
                f"{pad}| {pc} => (* wait {stmt.cond} *)",
                f"{pad}    if {self._truth(stmt.cond, 'qst')}",
                f"{pad}    then {self._step(name, body_pc, dangle)}",
                f"{pad}    else {name} qf {pc} qrnds nil {cycled}",
            ]
        if isinstance(stmt, VGoto):
            cycled = "( sim_cycle_pend qps qst )"
            target = state_pc[stmt.state]
            return [
                f"{pad}| {pc} => (* goto {stmt.state} *)",
                f"{pad}    {name} qf {target} qrnds nil {cycled}",
            ]
        if isinstance(stmt, VExit):
            return [f"{pad}| {pc} => mk_run qst qrnds qps ( S qf )"]
        if isinstance(stmt, VCallVtr):
            callee = self.vtr_def[stmt.qual]
            centry = self.layouts[stmt.qual][2]
            return [
                f"{pad}| {pc} => (* call {stmt.qual} *)",
                f"{pad}    let qr := {callee} qf {centry} qrnds qps qst in",
                f"{pad}    {self._step(name, nxt, dangle, rnds='( run_rnds qr )', ps='( run_pend qr )', st='( run_st qr )')}",
            ]
        raise ValueError(f"cannot compile sequence statement {type(stmt).__name__}")

    # -- theorems -----------------------------------------------------------------

    def theorems(self, report: ProveReport | None, budget_bits: int) -> str:
        out: list[str] = []
        top = self.design.root.name if self.design.root else "design"
        out.append(f"(* Coverage theorems for design {top}. Generated; do not edit. *)")
        out.append("")
        out.append("Require Import Coq.Bool.Bool.")
        out.append("Require Import Coq.NArith.NArith.")
        out.append("Require Import Coq.Lists.List.")
        out.append(f"From tlvc Require Import {BASE_FILE[:-2]} {DESIGN_FILE[:-2]}.")
        out.append("")
        for cp in self.covers:
            out.append(f"Definition {self.cp_def[cp]} ( qst : t_state ) : bool :=")
            out.append(
                f"  andb ( f_is_true1 ( {self.getter[self.cover_hit[cp]]} qst ) )"
                f" ( f_is_true1 ( {self.getter[self.cover_ok[cp]]} qst ) )."
            )
            out.append("")
        if report is None:
            return "\n".join(out) + "\n"

        profiles = {line.top: line.random_profile for line in report.runs}
        th_names: dict[tuple[str, str], str] = {}
        for result in report.results:
            if result.top is None:
                out.append(f"(* {result.cover}: no sequence covers it; nothing to state. *)")
                out.append("")
                continue
            vtr_short = self.vtr_def[result.top]
            stem = vtr_short[4:] if vtr_short.startswith("vtr_") else vtr_short
            cp_stem = result.cover[3:] if result.cover.startswith("cp_") else result.cover
            th = self.names.reserve(f"th_{stem}_{cp_stem}")
            th_names[(result.top, result.cover)] = th
            profile = profiles.get(result.top, ())
            entry = self.layouts[result.top][2]
            quantified = [(f"qr{i}", w) for i, w in enumerate(profile)]
            stream = "nil"
            for var, w in reversed(quantified):
                stream = f"( cons ( f_bus{w}_to_n {var} ) {stream} )"
            out.append(f"Theorem {th} :")
            for var, w in quantified:
                out.append(f"  forall ( {var} : t_bus{w} ),")
            out.append(
                f"  {self.cp_def[result.cover]} ( run_st ( {vtr_short} ( N.to_nat {self.fuel}%N )"
                f" {entry} {stream} nil reset_st ) ) = true."
            )
            out.append("Proof.")
            bits = sum(w for _, w in quantified)
            provable = (
                result.verdict == "proved"
                and result.top not in self.fork_poisoned
                and bits <= budget_bits
            )
            if provable:
                flat_bits: list[str] = []
                for var, w in quantified:
                    bit_vars = [f"{var}b{i}" for i in range(w)]
                    out.append(f"  destruct {var} as [ {' '.join(bit_vars)} ].")
                    flat_bits.extend(bit_vars)
                if flat_bits:
                    out.append(f"  destruct {', '.join(flat_bits)} ; vm_compute ; reflexivity.")
                else:
                    out.append("  vm_compute. reflexivity.")
                out.append("Qed.")
            else:
                if result.verdict == "proved":
                    why = (
                        "fork composition is not supported by the proof backend"
                        if result.top in self.fork_poisoned
                        else f"{bits} symbolic bits exceed the enumeration budget of {budget_bits}"
                    )
                else:
                    why = f"internal verdict was {result.verdict}"
                    if result.reason:
                        why += f" ({result.reason})"
                self.warnings.append(f"{th}: admitted, {why}")
                out.append(f"  (* {why} *)")
                out.append("Admitted.")
            out.append("")
        return "\n".join(out) + "\n"


# -- public entry points ---------------------------------------------------------


def emit_base_library(design: Design) -> str:
    return _Gen(design).base_library()


def emit_design_library(design: Design, limits: RunLimits | None = None) -> str:
    gen = _Gen(design, limits)
    gen.base_library()
    return gen.design_library()


def emit_theorems(
    design: Design,
    report: ProveReport | None,
    budget_bits: int = DEFAULT_BUDGET_BITS,
    limits: RunLimits | None = None,
) -> str:
    gen = _Gen(design, limits)
    gen.base_library()
    gen.design_library()
    return gen.theorems(report, budget_bits)


def emit_coq(
    design: Design,
    report: ProveReport | None = None,
    budget_bits: int = DEFAULT_BUDGET_BITS,
    limits: RunLimits | None = None,
) -> GallinaEmission:
    gen = _Gen(design, limits)
    files = {
        BASE_FILE: gen.base_library(),
        DESIGN_FILE: gen.design_library(),
        THEOREMS_FILE: gen.theorems(report, budget_bits),
    }
    files[PROJECT_FILE] = "-Q . tlvc\n" + "".join(f"{name}\n" for name in files)
    lint(files, gen.names.order)
    return GallinaEmission(files=files, warnings=tuple(gen.warnings))


# -- internal lint ----------------------------------------------------------------

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*")
_COMMENT = re.compile(r"\(\*.*?\*\)", re.S)
_INTRO = frozenset(("Definition", "Fixpoint", "Inductive", "Theorem", "Lemma"))


def lint(files: dict[str, str], known: list[str]) -> None:
    """Check delimiter balance and that every generated identifier is defined
    before its first use, across files in emission order."""
    known_set = set(known)
    defined: set[str] = set()
    for name, text in files.items():
        if not name.endswith(".v"):
            continue
        body = _COMMENT.sub(" ", text)
        for opener, closer in (("(", ")"), ("[", "]")):
            depth = 0
            for ch in body:
                if ch == opener:
                    depth += 1
                elif ch == closer:
                    depth -= 1
                    if depth < 0:
                        raise ValueError(f"{name}: unbalanced {closer!r}")
            if depth:
                raise ValueError(f"{name}: unbalanced {opener!r}")
        expect_def = False
        in_inductive = False
        after_bar = False
        for token in re.findall(r"[A-Za-z_][A-Za-z0-9_']*|[|.():=]", body):
            if token in _INTRO:
                expect_def = True
                in_inductive = token == "Inductive"
                continue
            if token == ".":
                in_inductive = False
                after_bar = False
                continue
            if token == "|":
                after_bar = in_inductive
                continue
            if not _IDENT.fullmatch(token):
                continue
            if expect_def or after_bar:
                defined.add(token)
                expect_def = False
                after_bar = False
                continue
            if token in known_set and token not in defined:
                raise ValueError(f"{name}: {token!r} is used before it is defined")
