"""Elaboration: build commands to an instance tree with lowered behavior.

The elaborated design is the single intermediate form the rest of the tool
works from. It fixes, per instance, the merged member set of all joined
clusters, flattens every transaction into an ordered list of guarded drive
sites, classifies each signal, and lowers verification sequences.

Signal classes:
  input  never written; free stimulus, zero-initialized
  var    written only by sequence-applied (stimulus) transactions
  seq    written under @e_clk by hardware; reads see the pre-edge value
  comb   defined by a condition body, written outside @e_clk by hardware,
         or written under @e_clk but only consumed later within the same
         transaction (a named intermediate wire, default 0 when unguarded)
  pulse  a bodiless condition: driven to 1 for one cycle, else 0
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import ast, resolve, terms
from .resolve import LoweredAssign, Scope, SignalEntry
from .source import CompileError, Span
from .terms import Term

EVENT_CLOCK = "e_clk"


@dataclass(frozen=True)
class SignalInfo:
    flat: str
    name: str
    width: int
    depth: int | None
    owner: str  # instance path
    klass: str  # input | var | seq | comb | pulse
    span: Span
    is_condition: bool = False


@dataclass(frozen=True)
class Site:
    """One guarded action inside a flattened transaction."""

    action: str  # "assign" | "drive" | "apply"
    guards: tuple[str, ...]  # flat condition names, conjoined
    registered: bool
    unique_group: int  # sites sharing a group id came from sibling unique guards
    span: Span
    assign: LoweredAssign | None = None
    cond: str | None = None
    sub: "LoweredTr | None" = None

    def guard_term(self) -> Term:
        return terms.and_list([terms.var(g, 1) for g in self.guards])


@dataclass(frozen=True)
class LoweredTr:
    name: str
    qual: str  # instance-qualified name
    instance: str
    sites: tuple[Site, ...]
    hardware: bool


# -- sequence statement IR ----------------------------------------------------


@dataclass(frozen=True)
class VAssigns:
    assigns: tuple[LoweredAssign, ...]
    name: str
    span: Span


@dataclass(frozen=True)
class VDrive:
    cond: str
    span: Span


@dataclass(frozen=True)
class VApplyTr:
    tr: LoweredTr
    span: Span


@dataclass(frozen=True)
class VCallVtr:
    qual: str
    span: Span


@dataclass(frozen=True)
class VGoto:
    state: str
    span: Span


@dataclass(frozen=True)
class VWait:
    cond: str
    body: tuple
    span: Span


@dataclass(frozen=True)
class VRandom:
    flat: str
    width: int
    span: Span


@dataclass(frozen=True)
class VCover:
    qual: str
    conds: tuple[str, ...]
    span: Span


@dataclass(frozen=True)
class VExit:
    span: Span


@dataclass(frozen=True)
class VFork:
    branches: tuple[tuple, ...]
    span: Span


@dataclass(frozen=True)
class LoweredVtr:
    name: str
    qual: str
    instance: str
    states: dict[str, tuple]
    first_state: str


@dataclass
class Instance:
    name: str
    path: str  # "" for the root
    parent: "Instance | None"
    clusters: list[ast.ClusterDecl] = field(default_factory=list)
    children: list["Instance"] = field(default_factory=list)

    def flat(self, member: str) -> str:
        return f"{self.path}/{member}" if self.path else member


@dataclass(frozen=True)
class DriveCheck:
    """A compile-time obligation: `claim` must hold for every valuation."""

    description: str
    claim: Term
    span: Span


class Design:
    def __init__(self) -> None:
        self.root: Instance | None = None
        self.instances: dict[str, Instance] = {}
        self.signals: dict[str, SignalInfo] = {}
        self.cond_bodies: dict[str, Term] = {}
        self.comb_equations: dict[str, Term] = {}
        self.comb_order: list[str] = []
        self.hardware_trs: list[LoweredTr] = []
        self.stimulus_trs: dict[str, LoweredTr] = {}
        self.datapaths: dict[str, tuple[LoweredAssign, ...]] = {}
        self.vtrs: dict[str, LoweredVtr] = {}
        self.covers: dict[str, tuple[str, ...]] = {}
        self.drive_checks: list[DriveCheck] = []
        self.used_by: dict[str, set[str]] = {}
        # expanded hardware drive sites per target, in application order
        self.hw_sites: dict[str, list[Site]] = {}
        self._comb_env: dict[str, Term] | None = None

    def signal(self, flat: str) -> SignalInfo:
        return self.signals[flat]

    def resolve_comb(self, term: Term) -> Term:
        """Substitute combinational definitions until only state vars remain."""
        if self._comb_env is None:
            env: dict[str, Term] = {}
            for flat in self.comb_order:
                env[flat] = terms.substitute(self.comb_equations[flat], env)
            self._comb_env = env
        return terms.substitute(term, self._comb_env)

    def instance_order(self) -> list[Instance]:
        order: list[Instance] = []

        def walk(inst: Instance) -> None:
            order.append(inst)
            for child in inst.children:
                walk(child)

        assert self.root is not None
        walk(self.root)
        return order

    def signals_of_class(self, *classes: str) -> list[SignalInfo]:
        return [info for info in self.signals.values() if info.klass in classes]

    def dump_ir(self) -> str:
        blob = {
            "instances": [
                {
                    "path": inst.path or "<root>",
                    "clusters": [c.name or "<inline>" for c in inst.clusters],
                }
                for inst in self.instance_order()
            ],
            "signals": [
                {
                    "flat": info.flat,
                    "width": info.width,
                    "depth": info.depth,
                    "class": info.klass,
                    "owner": info.owner or "<root>",
                }
                for info in sorted(self.signals.values(), key=lambda s: s.flat)
            ],
            "transactions": [
                {
                    "qual": tr.qual,
                    "hardware": tr.hardware,
                    "sites": [
                        {
                            "action": site.action,
                            "guards": list(site.guards),
                            "registered": site.registered,
                            "target": site.assign.flat
                            if site.assign
                            else (site.cond or (site.sub.qual if site.sub else "")),
                        }
                        for site in expand_sites(tr)
                    ],
                }
                for tr in list(self.hardware_trs) + list(self.stimulus_trs.values())
            ],
            "sequences": sorted(self.vtrs),
            "covers": {name: list(conds) for name, conds in sorted(self.covers.items())},
            "comb_order": self.comb_order,
        }
        return json.dumps(blob, indent=2)


def expand_sites(tr: LoweredTr) -> list[Site]:
    """A transaction as a flat, ordered site list with sub-applications inlined."""
    out: list[Site] = []
    for site in tr.sites:
        if site.action == "apply":
            assert site.sub is not None
            for sub_site in expand_sites(site.sub):
                out.append(
                    Site(
                        action=sub_site.action,
                        guards=site.guards + sub_site.guards,
                        registered=site.registered or sub_site.registered,
                        unique_group=sub_site.unique_group,
                        span=sub_site.span,
                        assign=sub_site.assign,
                        cond=sub_site.cond,
                    )
                )
        else:
            out.append(site)
    return out


class _InstanceScope(Scope):
    """Own members first, then globally unique declarations elsewhere."""

    def __init__(self, builder: "_Builder", inst: Instance, own: dict[str, SignalEntry]):
        super().__init__(own)
        self.builder = builder
        self.inst = inst

    def lookup(self, name: str, span: Span) -> SignalEntry:
        entry = self.entries.get(name)
        if entry is None:
            candidates = self.builder.global_decls.get(name, [])
            if not candidates:
                kind = ast.element_kind(name)
                if kind in ("datapath", "transaction", "vtr", "cover", "edge"):
                    raise CompileError(f"{kind} {name!r} cannot appear in an expression", span)
                raise CompileError(f"unknown signal or condition {name!r}", span)
            if len(candidates) > 1:
                paths = ", ".join(p or "<root>" for p, _ in candidates)
                raise CompileError(
                    f"{name!r} is declared in more than one instance ({paths});"
                    " cross-instance references must be unique",
                    span,
                )
            entry = candidates[0][1]
        self.builder.note_use(entry.flat, self.inst.path)
        return entry


class _Builder:
    def __init__(self, unit: ast.SourceUnit):
        self.unit = unit
        self.design = Design()
        self.clusters = {c.name: c for c in unit.clusters}
        self.global_decls: dict[str, list[tuple[str, SignalEntry]]] = {}
        self.scopes: dict[str, _InstanceScope] = {}
        self.members: dict[str, dict[str, tuple[str, object]]] = {}
        self.lowered: dict[str, LoweredTr] = {}
        self.tr_referenced: set[str] = set()
        self.vtr_referenced: set[str] = set()
        # classification records, filled from expanded hardware/stimulus contexts
        self.writes: dict[str, list[tuple[str, int, bool, bool]]] = {}
        self.unique_groups: dict[tuple[str, int], list[Site]] = {}
        self.record_uses = True

    def note_use(self, flat: str, inst_path: str) -> None:
        if self.record_uses:
            self.design.used_by.setdefault(flat, set()).add(inst_path)

    # -- instance tree -------------------------------------------------------

    def build(self, top: str | None) -> Design:
        decl = self._pick_top(top)
        root = Instance(name=decl.name, path="", parent=None)
        self.design.root = root
        self.design.instances[""] = root
        if decl.role:
            root.clusters.append(self._cluster(decl.role, decl.span))
        self._run_build_body(root, decl.body)
        self._collect_members()
        self._find_referenced_trs()
        self._lower_conditions()
        self._lower_transactions()
        self._record_contexts()
        self._classify()
        self._lower_vtrs()
        self._lower_leftover_datapaths()
        self._comb_topo()
        self._drive_conflict_checks()
        return self.design

    def _pick_top(self, top: str | None) -> ast.BuildDecl:
        if not self.unit.builds:
            raise CompileError("no build command in the source unit", Span(0, 0, 1, 1, self.unit.filename))
        if top is None:
            if len(self.unit.builds) > 1:
                names = ", ".join(b.name for b in self.unit.builds)
                raise CompileError(
                    f"multiple build commands ({names}); choose one with --top",
                    self.unit.builds[1].span,
                )
            return self.unit.builds[0]
        for decl in self.unit.builds:
            if decl.name == top:
                return decl
        raise CompileError(f"no build command named {top!r}", Span(0, 0, 1, 1, self.unit.filename))

    def _cluster(self, name: str, span: Span) -> ast.ClusterDecl:
        cluster = self.clusters.get(name)
        if cluster is None:
            raise CompileError(f"unknown cluster {name!r}", span)
        return cluster

    def _run_build_body(self, inst: Instance, body: tuple[ast.BuildStmt, ...]) -> None:
        for stmt in body:
            if isinstance(stmt, ast.BuildInstance):
                path = f"{inst.path}/{stmt.name}" if inst.path else stmt.name
                if path in self.design.instances:
                    raise CompileError(f"duplicate instance name {stmt.name!r}", stmt.span)
                child = Instance(name=stmt.name, path=path, parent=inst)
                if stmt.role:
                    child.clusters.append(self._cluster(stmt.role, stmt.span))
                inst.children.append(child)
                self.design.instances[path] = child
                self._run_build_body(child, stmt.body)
            elif isinstance(stmt, ast.Join):
                target = self._find_instance(stmt.target, stmt.span)
                if isinstance(stmt.source, ast.ClusterDecl):
                    target.clusters.append(stmt.source)
                else:
                    target.clusters.append(self._cluster(stmt.source, stmt.span))
            else:
                raise CompileError("unsupported build statement", stmt.span)

    def _find_instance(self, name: str, span: Span) -> Instance:
        assert self.design.root is not None
        if name == self.design.root.name:
            return self.design.root
        matches = [inst for inst in self.design.instances.values() if inst.name == name]
        if not matches:
            raise CompileError(f"join target {name!r} is not a built instance", span)
        if len(matches) > 1:
            raise CompileError(f"join target {name!r} is ambiguous", span)
        return matches[0]

    # -- member tables --------------------------------------------------------

    def _collect_members(self) -> None:
        for inst in self.design.instance_order():
            table: dict[str, tuple[str, object]] = {}
            own: dict[str, SignalEntry] = {}
            for cluster in inst.clusters:
                for sig in cluster.signals:
                    self._add_member(inst, table, sig.name, "signal", sig, sig.span)
                for cond in cluster.conditions:
                    self._add_member(inst, table, cond.name, "condition", cond, cond.span)
                for dp in cluster.datapaths:
                    self._add_member(inst, table, dp.name, "datapath", dp, dp.span)
                for tr in cluster.transactions:
                    self._add_member(inst, table, tr.name, "transaction", tr, tr.span)
                for vtr in cluster.vtrs:
                    self._add_member(inst, table, vtr.name, "vtr", vtr, vtr.span)
            self.members[inst.path] = table
            for name, (kind, decl) in table.items():
                if kind == "signal":
                    entry = SignalEntry(flat=inst.flat(name), width=decl.width, depth=decl.depth)
                    self._declare(inst, name, entry, decl.span, False, decl.width, decl.depth)
                    own[name] = entry
                elif kind == "condition":
                    entry = SignalEntry(flat=inst.flat(name), width=1, is_condition=True)
                    self._declare(inst, name, entry, decl.span, True, 1, None)
                    own[name] = entry
            self.scopes[inst.path] = _InstanceScope(self, inst, own)

    def _add_member(self, inst: Instance, table, name: str, kind: str, decl, span: Span) -> None:
        if name in table:
            raise CompileError(
                f"element {name!r} is declared more than once in instance"
                f" {inst.path or '<root>'} (conflicting joined clusters)",
                span,
            )
        table[name] = (kind, decl)

    def _declare(self, inst, name, entry, span, is_cond, width, depth) -> None:
        self.global_decls.setdefault(name, []).append((inst.path, entry))
        self.design.signals[entry.flat] = SignalInfo(
            flat=entry.flat,
            name=name,
            width=width,
            depth=depth,
            owner=inst.path,
            klass="input",
            span=span,
            is_condition=is_cond,
        )

    # -- transaction reference graph -----------------------------------------

    def _find_referenced_trs(self) -> None:
        for inst in self.design.instance_order():
            for kind, decl in self.members[inst.path].values():
                if kind == "transaction":
                    self._scan_tr_items(inst, decl.items)
                elif kind == "vtr":
                    for state in decl.sequence.states:
                        self._scan_stmts(inst, state.body)

    def _scan_tr_items(self, inst: Instance, items) -> None:
        for item in items:
            if isinstance(item, ast.TrGuard):
                self._scan_tr_items(inst, item.items)
            elif isinstance(item, ast.TrApplyTransaction):
                qual, _, _ = self._resolve_element(inst, item.name, "transaction", item.span)
                self.tr_referenced.add(qual)

    def _scan_stmts(self, inst: Instance, body) -> None:
        for stmt in body:
            if isinstance(stmt, ast.ApplyTransaction):
                qual, _, _ = self._resolve_element(inst, stmt.name, "transaction", stmt.span)
                self.vtr_referenced.add(qual)
            elif isinstance(stmt, ast.WaitGuard):
                self._scan_stmts(inst, stmt.body)
            elif isinstance(stmt, ast.ForkJoin):
                for branch in stmt.branches:
                    self._scan_stmts(inst, branch)

    def _resolve_element(self, inst: Instance, name: str, want: str, span: Span):
        """Resolve a datapath/transaction/vtr reference to (qual, instance, decl)."""
        found = self.members[inst.path].get(name)
        if found is not None:
            kind, decl = found
            if kind != want:
                raise CompileError(f"{name!r} is a {kind}, expected a {want}", span)
            return inst.flat(name), inst, decl
        candidates = []
        for other in self.design.instance_order():
            entry = self.members[other.path].get(name)
            if entry is not None and entry[0] == want:
                candidates.append((other, entry[1]))
        if not candidates:
            raise CompileError(f"unknown {want} {name!r}", span)
        if len(candidates) > 1:
            paths = ", ".join(o.path or "<root>" for o, _ in candidates)
            raise CompileError(f"{want} {name!r} is ambiguous across instances ({paths})", span)
        other, decl = candidates[0]
        return other.flat(name), other, decl

    # -- lowering -------------------------------------------------------------

    def _lower_datapath(self, qual: str, owner: Instance, dp) -> tuple[LoweredAssign, ...]:
        cached = self.design.datapaths.get(qual)
        if cached is None:
            cached = tuple(resolve.lower_assign(a, self.scopes[owner.path]) for a in dp.assigns)
            self.design.datapaths[qual] = cached
        return cached

    def _lower_leftover_datapaths(self) -> None:
        """Lower datapaths no transaction or sequence referenced, without
        recording signal uses (dead datapaths must not affect routing)."""
        self.record_uses = False
        try:
            for inst in self.design.instance_order():
                for name, (kind, decl) in self.members[inst.path].items():
                    if kind == "datapath":
                        self._lower_datapath(inst.flat(name), inst, decl)
        finally:
            self.record_uses = True

    def _lower_conditions(self) -> None:
        for inst in self.design.instance_order():
            scope = self.scopes[inst.path]
            for kind, decl in list(self.members[inst.path].values()):
                if kind != "condition" or decl.body is None:
                    continue
                term = resolve.lower_condition_body(decl.body, scope)
                self.design.cond_bodies[inst.flat(decl.name)] = term

    def _lower_transactions(self) -> None:
        for inst in self.design.instance_order():
            for kind, decl in self.members[inst.path].values():
                if kind == "transaction":
                    self._lower_tr(inst, decl)
        for qual, tr in self.lowered.items():
            if tr.hardware:
                self.design.hardware_trs.append(tr)
            else:
                self.design.stimulus_trs[qual] = tr

    def _lower_tr(self, inst: Instance, decl: ast.TransactionDecl, stack: tuple[str, ...] = ()) -> LoweredTr:
        qual = inst.flat(decl.name)
        done = self.lowered.get(qual)
        if done is not None:
            return done
        if qual in stack:
            raise CompileError(f"transaction {decl.name!r} applies itself (cycle)", decl.span)
        sites: list[Site] = []
        group_counter = [0]
        self._lower_tr_items(inst, decl.items, (), False, -1, sites, stack + (qual,), group_counter)
        hardware = qual not in self.tr_referenced and qual not in self.vtr_referenced
        tr = LoweredTr(name=decl.name, qual=qual, instance=inst.path, sites=tuple(sites), hardware=hardware)
        self.lowered[qual] = tr
        return tr

    def _lower_tr_items(self, inst, items, guards, registered, group, sites, stack, group_counter) -> None:
        scope = self.scopes[inst.path]
        sibling_unique_group = None
        for item in items:
            if isinstance(item, ast.TrGuard):
                if ast.element_kind(item.guard) == "edge":
                    if item.guard != EVENT_CLOCK:
                        raise CompileError(f"unknown event {item.guard!r}", item.span)
                    if item.unique:
                        raise CompileError("`unique` applies to condition guards only", item.span)
                    self._lower_tr_items(inst, item.items, guards, True, group, sites, stack, group_counter)
                    continue
                entry = scope.lookup(item.guard, item.span)
                if not entry.is_condition:
                    raise CompileError(f"guard {item.guard!r} is not a condition", item.span)
                if item.unique:
                    if sibling_unique_group is None:
                        group_counter[0] += 1
                        sibling_unique_group = group_counter[0]
                    sub_group = sibling_unique_group
                else:
                    sub_group = group
                self._lower_tr_items(
                    inst, item.items, guards + (entry.flat,), registered, sub_group, sites, stack, group_counter
                )
            elif isinstance(item, ast.TrApplyDatapath):
                qual, owner, dp = self._resolve_element(inst, item.name, "datapath", item.span)
                for lowered in self._lower_datapath(qual, owner, dp):
                    sites.append(
                        Site(
                            action="assign",
                            guards=guards,
                            registered=registered,
                            unique_group=group,
                            span=item.span,
                            assign=lowered,
                        )
                    )
            elif isinstance(item, ast.TrDriveCondition):
                entry = scope.lookup(item.name, item.span)
                if not entry.is_condition:
                    raise CompileError(f"{item.name!r} is not a condition", item.span)
                sites.append(
                    Site(
                        action="drive",
                        guards=guards,
                        registered=registered,
                        unique_group=group,
                        span=item.span,
                        cond=entry.flat,
                    )
                )
            elif isinstance(item, ast.TrApplyTransaction):
                _, owner, sub_decl = self._resolve_element(inst, item.name, "transaction", item.span)
                sub = self._lower_tr(owner, sub_decl, stack)
                sites.append(
                    Site(
                        action="apply",
                        guards=guards,
                        registered=registered,
                        unique_group=group,
                        span=item.span,
                        sub=sub,
                    )
                )
            else:
                raise CompileError("unsupported transaction item", item.span)

    # -- classification records from expanded contexts --------------------------

    def _record_contexts(self) -> None:
        for qual, tr in self.lowered.items():
            if tr.hardware:
                self._record_tr(tr, is_hw=True)
            elif qual in self.vtr_referenced:
                self._record_tr(tr, is_hw=False)

    def _record_tr(self, tr: LoweredTr, is_hw: bool) -> None:
        for idx, site in enumerate(expand_sites(tr)):
            if site.unique_group != -1:
                self.unique_groups.setdefault((tr.qual, site.unique_group), []).append(site)
            if site.action == "assign":
                assign = site.assign
                assert assign is not None
                self.writes.setdefault(assign.flat, []).append((tr.qual, idx, site.registered, is_hw))
                if is_hw:
                    self.design.hw_sites.setdefault(assign.flat, []).append(site)
                    owner = self.design.signals[assign.flat].owner
                    for term in self._site_reads(site):
                        for read in terms.free_vars(term):
                            self.note_use(_base_name(read), owner)
            elif site.action == "drive":
                assert site.cond is not None
                if is_hw and not site.registered:
                    raise CompileError(
                        "hardware can only drive a condition under @e_clk", site.span
                    )
                self.writes.setdefault(site.cond, []).append((tr.qual, idx, site.registered, is_hw))
                if is_hw:
                    self.design.hw_sites.setdefault(site.cond, []).append(site)

    def _site_reads(self, site: Site) -> list[Term]:
        assert site.assign is not None
        reads = [site.assign.rhs]
        if site.assign.index is not None:
            reads.append(site.assign.index)
        return reads

    # -- classification -------------------------------------------------------

    def _classify(self) -> None:
        self.design.signals = {
            flat: self._classify_one(flat, info) for flat, info in self.design.signals.items()
        }

    def _classify_one(self, flat: str, info: SignalInfo) -> SignalInfo:
        writes = self.writes.get(flat, [])
        if info.is_condition:
            has_body = flat in self.design.cond_bodies
            if has_body and writes:
                raise CompileError(f"condition {info.name!r} has a body and is also driven", info.span)
            return _with_class(info, "comb" if has_body else "pulse")
        if not writes:
            return _with_class(info, "input")
        hw_writes = [w for w in writes if w[3]]
        if not hw_writes:
            return _with_class(info, "var")
        registered = {w[2] for w in hw_writes}
        if len(registered) > 1:
            raise CompileError(
                f"signal {info.name!r} has both clocked and immediate hardware drives", info.span
            )
        return _with_class(info, "seq" if registered.pop() else "comb")

    # -- sequences --------------------------------------------------------------

    def _lower_vtrs(self) -> None:
        for inst in self.design.instance_order():
            for kind, decl in self.members[inst.path].values():
                if kind != "vtr":
                    continue
                qual = inst.flat(decl.name)
                states: dict[str, tuple] = {}
                names = [st.name for st in decl.sequence.states]
                for st in decl.sequence.states:
                    states[st.name] = self._lower_stmts(inst, st.body, names)
                self.design.vtrs[qual] = LoweredVtr(
                    name=decl.name,
                    qual=qual,
                    instance=inst.path,
                    states=states,
                    first_state=decl.sequence.states[0].name,
                )

    def _lower_stmts(self, inst: Instance, body, state_names: list[str]) -> tuple:
        scope = self.scopes[inst.path]
        out: list = []
        for stmt in body:
            if isinstance(stmt, ast.ApplyDatapath):
                qual, owner, dp = self._resolve_element(inst, stmt.name, "datapath", stmt.span)
                assigns = self._lower_datapath(qual, owner, dp)
                for lowered in assigns:
                    self._check_stimulus_target(lowered.flat, stmt.span)
                out.append(VAssigns(assigns=assigns, name=stmt.name, span=stmt.span))
            elif isinstance(stmt, ast.DriveCondition):
                entry = scope.lookup(stmt.name, stmt.span)
                if not entry.is_condition:
                    raise CompileError(f"{stmt.name!r} is not a condition", stmt.span)
                if self.design.signals[entry.flat].klass != "pulse":
                    raise CompileError(
                        f"condition {stmt.name!r} has a body and cannot be driven", stmt.span
                    )
                if self.design.hw_sites.get(entry.flat):
                    raise CompileError(
                        f"condition {stmt.name!r} is already driven by hardware", stmt.span
                    )
                out.append(VDrive(cond=entry.flat, span=stmt.span))
            elif isinstance(stmt, ast.ApplyTransaction):
                qual, _, _ = self._resolve_element(inst, stmt.name, "transaction", stmt.span)
                tr = self.lowered[qual]
                for site in expand_sites(tr):
                    if site.action == "assign":
                        assert site.assign is not None
                        self._check_stimulus_target(site.assign.flat, stmt.span)
                    elif site.action == "drive" and self.design.hw_sites.get(site.cond):
                        raise CompileError(
                            f"condition {site.cond!r} is already driven by hardware", stmt.span
                        )
                out.append(VApplyTr(tr=tr, span=stmt.span))
            elif isinstance(stmt, ast.CallVtr):
                qual, _, _ = self._resolve_element(inst, stmt.name, "vtr", stmt.span)
                out.append(VCallVtr(qual=qual, span=stmt.span))
            elif isinstance(stmt, ast.Goto):
                if stmt.state not in state_names:
                    raise CompileError(f"goto names unknown state {stmt.state!r}", stmt.span)
                out.append(VGoto(state=stmt.state, span=stmt.span))
            elif isinstance(stmt, ast.WaitGuard):
                entry = scope.lookup(stmt.condition, stmt.span)
                if not entry.is_condition:
                    raise CompileError(f"wait guard {stmt.condition!r} is not a condition", stmt.span)
                out.append(
                    VWait(cond=entry.flat, body=self._lower_stmts(inst, stmt.body, state_names), span=stmt.span)
                )
            elif isinstance(stmt, ast.Random):
                entry = scope.lookup(stmt.signal, stmt.span)
                info = self.design.signals[entry.flat]
                if info.depth is not None:
                    raise CompileError("random applies to scalar signals only", stmt.span)
                if info.klass not in ("input", "var"):
                    raise CompileError(
                        f"random target {stmt.signal!r} is {info.klass}; only stimulus"
                        " signals can be randomized",
                        stmt.span,
                    )
                out.append(VRandom(flat=entry.flat, width=info.width, span=stmt.span))
            elif isinstance(stmt, ast.Cover):
                conds = []
                for name in stmt.conditions:
                    entry = scope.lookup(name, stmt.span)
                    if not entry.is_condition:
                        raise CompileError(f"cover references non-condition {name!r}", stmt.span)
                    conds.append(entry.flat)
                qual = inst.flat(stmt.name)
                if qual in self.design.covers:
                    raise CompileError(f"duplicate coverage point {stmt.name!r}", stmt.span)
                self.design.covers[qual] = tuple(conds)
                out.append(VCover(qual=qual, conds=tuple(conds), span=stmt.span))
            elif isinstance(stmt, ast.Exit):
                out.append(VExit(span=stmt.span))
            elif isinstance(stmt, ast.ForkJoin):
                branches = tuple(self._lower_stmts(inst, b, state_names) for b in stmt.branches)
                out.append(VFork(branches=branches, span=stmt.span))
            else:
                raise CompileError("unsupported sequence statement", stmt.span)
        return tuple(out)

    def _check_stimulus_target(self, flat: str, span: Span) -> None:
        klass = self.design.signals[flat].klass
        if klass == "comb":
            raise CompileError(f"stimulus cannot write {flat!r}: it is combinational (a wire)", span)
        if klass == "seq":
            raise CompileError(
                f"stimulus cannot write {flat!r}: hardware already drives it on the clock", span
            )

    # -- combinational equations and ordering -----------------------------------

    def _comb_topo(self) -> None:
        design = self.design
        for flat, info in design.signals.items():
            if info.klass != "comb":
                continue
            if info.is_condition:
                design.comb_equations[flat] = design.cond_bodies[flat]
            else:
                design.comb_equations[flat] = self._fold_sites(flat, info)
        comb_names = set(design.comb_equations)
        deps = {
            flat: {_base_name(v) for v in terms.free_vars(eqn) if _base_name(v) in comb_names}
            for flat, eqn in design.comb_equations.items()
        }
        order: list[str] = []
        mark: dict[str, int] = {}

        def visit(node: str, chain: list[str]) -> None:
            seen = mark.get(node, 0)
            if seen == 2:
                return
            if seen == 1:
                loop = " -> ".join(chain + [node])
                raise CompileError(f"combinational cycle: {loop}", design.signals[node].span)
            mark[node] = 1
            for dep in sorted(deps[node]):
                visit(dep, chain + [node])
            mark[node] = 2
            order.append(node)

        for node in sorted(comb_names):
            visit(node, [])
        design.comb_order = order

    def _fold_sites(self, flat: str, info: SignalInfo) -> Term:
        """Ordered guarded drives fold into one wire equation, default 0."""
        value = terms.const(0, info.width)
        for site in self.design.hw_sites.get(flat, []):
            assert site.assign is not None
            value = terms.ite(site.guard_term(), site.assign.rhs, value)
        return value

    # -- drive conflict obligations ----------------------------------------------

    def _drive_conflict_checks(self) -> None:
        design = self.design
        targets: dict[str, list[tuple[str, Site]]] = {}
        for tr in design.hardware_trs:
            for site in expand_sites(tr):
                target = site.assign.flat if site.assign else site.cond
                if target is not None:
                    targets.setdefault(target, []).append((tr.qual, site))
        for flat in sorted(targets):
            entries = targets[flat]
            for i in range(len(entries)):
                for j in range(i + 1, len(entries)):
                    qa, a = entries[i]
                    qb, b = entries[j]
                    if qa == qb:
                        continue  # ordered override within one transaction is defined
                    self._add_check(
                        f"drives of {flat} from {qa} and {qb} are mutually exclusive", a, b
                    )
        for (qual, _group), members in sorted(self.unique_groups.items()):
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    a, b = members[i], members[j]
                    if a.guards == b.guards:
                        continue  # same guard block
                    self._add_check(f"unique guards in {qual} are mutually exclusive", a, b)

    def _add_check(self, description: str, a: Site, b: Site) -> None:
        claim = self.design.resolve_comb(terms.not_(terms.and_(a.guard_term(), b.guard_term())))
        if claim.kind == "const" and claim.value == 1:
            return
        for existing in self.design.drive_checks:
            if existing.description == description and existing.claim is claim:
                return
        self.design.drive_checks.append(DriveCheck(description=description, claim=claim, span=a.span))


def _base_name(var_name: str) -> str:
    """Array element vars `mem[3]` read as uses of `mem`."""
    if var_name.endswith("]"):
        cut = var_name.rfind("[")
        if cut != -1:
            return var_name[:cut]
    return var_name


def _with_class(info: SignalInfo, klass: str) -> SignalInfo:
    return SignalInfo(
        flat=info.flat,
        name=info.name,
        width=info.width,
        depth=info.depth,
        owner=info.owner,
        klass=klass,
        span=info.span,
        is_condition=info.is_condition,
    )


def elaborate(
    unit: ast.SourceUnit,
    top: str | None = None,
    sva_activation_bound: int | None = None,
    sva_trace_cycles: int | None = None,
) -> Design:
    if any(cluster.sva_blocks for cluster in unit.clusters):
        from . import sva

        unit = sva.expand_unit(
            unit, top=top, activation_bound=sva_activation_bound, trace_cycles=sva_trace_cycles
        )
    return _Builder(unit).build(top)
