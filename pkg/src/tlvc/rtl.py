"""Verilog-2001 emission, one file per module.

Each module owns the declarations joined into its instance: combinational
signals become wires driven by `assign`, clocked signals become registers
updated under `posedge clk` with one guarded write per drive site (later
sites override earlier ones, matching the symbolic engine's commit order).
Every compound term node gets its own exact-width wire so the emitted
netlist cannot pick up Verilog's context-determined widths.

Externally driven signals (testbench inputs, randomized values, stimulus
pulses) surface as input ports of the top module and are routed down the
hierarchy; any signal read across module boundaries is routed through
ports of the modules in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import terms
from .design import Design, Instance, SignalInfo, Site
from .terms import Term


def mangle(path: str) -> str:
    return path.replace("/", "_")


def external_signals(design: Design) -> list[SignalInfo]:
    """Signals the verification environment drives: ports of the top module."""
    out = []
    for info in design.signals.values():
        if info.klass in ("input", "var"):
            out.append(info)
        elif info.klass == "pulse" and not design.hw_sites.get(info.flat):
            out.append(info)
    return out


@dataclass
class _Reg:
    info: SignalInfo
    pulse: bool
    sites: list[Site]


@dataclass
class _Module:
    inst: Instance
    name: str
    regs: list[_Reg] = field(default_factory=list)
    combs: list[SignalInfo] = field(default_factory=list)
    inputs: list[str] = field(default_factory=list)  # flats
    outputs: list[str] = field(default_factory=list)  # flats
    wires: list[str] = field(default_factory=list)  # pass-through flats
    nets: dict[str, str] = field(default_factory=dict)  # flat -> local net name
    taken: set[str] = field(default_factory=lambda: {"clk"})

    def net(self, flat: str) -> str:
        name = self.nets.get(flat)
        if name is None:
            name = mangle(flat)
            if name in self.taken:
                base, n = name, 2
                while f"{base}_{n}" in self.taken:
                    n += 1
                name = f"{base}_{n}"
            self.taken.add(name)
            self.nets[flat] = name
        return name


def _covers(inst_path: str, path: str) -> bool:
    if inst_path == "":
        return True
    return path == inst_path or path.startswith(inst_path + "/")


def _width_decl(width: int) -> str:
    return f"[{width - 1}:0] " if width > 1 else ""


def _term_refs(term: Term) -> set[str]:
    out = set()
    for name in terms.free_vars(term):
        base = name
        if base.endswith("]"):
            cut = base.rfind("[")
            if cut != -1:
                base = base[:cut]
        out.add(base)
    return out


class _Emitter:
    def __init__(self, design: Design):
        self.design = design
        assert design.root is not None
        self.root = design.root
        self.ext = {info.flat for info in external_signals(design)}
        self.modules: dict[str, _Module] = {}
        top_name = mangle(design.root.name or "top")
        for inst in design.instance_order():
            name = top_name if inst.path == "" else f"{top_name}_{mangle(inst.path)}"
            self.modules[inst.path] = _Module(inst=inst, name=name)

    def emit(self) -> dict[str, str]:
        self._place_logic()
        self._route()
        return {f"{m.name}.v": self._render(m) for m in self.modules.values()}

    # -- placement and routing ---------------------------------------------------

    def _place_logic(self) -> None:
        design = self.design
        self.uses: dict[str, set[str]] = {}  # flat -> instance paths reading it
        for info in design.signals.values():
            if info.flat in self.ext:
                continue
            mod = self.modules[info.owner]
            if info.klass == "comb":
                mod.combs.append(info)
                self._note_uses(design.comb_equations[info.flat], info.owner)
            elif info.klass == "seq" or (info.klass == "pulse" and design.hw_sites.get(info.flat)):
                sites = design.hw_sites.get(info.flat, [])
                mod.regs.append(_Reg(info=info, pulse=info.klass == "pulse", sites=sites))
                for site in sites:
                    self._note_uses(site.guard_term(), info.owner)
                    if site.assign is not None:
                        self._note_uses(site.assign.rhs, info.owner)
                        if site.assign.index is not None:
                            self._note_uses(site.assign.index, info.owner)

    def _note_uses(self, term: Term, path: str) -> None:
        for flat in _term_refs(term):
            self.uses.setdefault(flat, set()).add(path)

    def _route(self) -> None:
        design = self.design
        for info in design.signals.values():
            flat = info.flat
            users = set(self.uses.get(flat, ()))
            if flat in self.ext:
                if not users:
                    users = {info.owner}  # surface unused environment signals anyway
                for mod in self.modules.values():
                    if any(_covers(mod.inst.path, u) for u in users):
                        self._check_portable(info)
                        mod.inputs.append(flat)
                continue
            owner = info.owner
            for mod in self.modules.values():
                path = mod.inst.path
                if path == "":
                    continue  # the top module has no signal ports of its own
                has_def = _covers(path, owner)
                has_use = any(_covers(path, u) for u in users)
                use_outside = any(not _covers(path, u) for u in users)
                if has_def and use_outside:
                    self._check_portable(info)
                    mod.outputs.append(flat)
                elif not has_def and has_use:
                    self._check_portable(info)
                    mod.inputs.append(flat)

    def _check_portable(self, info: SignalInfo) -> None:
        if info.depth is not None:
            raise ValueError(
                f"array signal {info.flat!r} is read across module boundaries;"
                " arrays cannot be routed through ports"
            )

    def _child_ports(self, child_path: str) -> list[tuple[str, str]]:
        mod = self.modules[child_path]
        out = [("clk", "clk")]
        for flat in sorted(set(mod.inputs) | set(mod.outputs)):
            out.append((mod.net(flat), flat))
        return out

    # -- rendering ----------------------------------------------------------------

    def _render(self, mod: _Module) -> str:
        design = self.design
        lines: list[str] = []

        port_decls = ["input wire clk"]
        for flat in sorted(set(mod.inputs)):
            info = design.signals[flat]
            port_decls.append(f"input wire {_width_decl(info.width)}{mod.net(flat)}")
        for flat in sorted(set(mod.outputs)):
            info = design.signals[flat]
            kind = "reg" if any(r.info.flat == flat for r in mod.regs) else "wire"
            port_decls.append(f"output {kind} {_width_decl(info.width)}{mod.net(flat)}")

        body: list[str] = []
        for reg in mod.regs:
            if reg.info.flat in set(mod.outputs):
                continue  # declared in the port list
            if reg.info.depth is not None:
                body.append(
                    f"reg {_width_decl(reg.info.width)}{mod.net(reg.info.flat)} [0:{reg.info.depth - 1}];"
                )
            else:
                body.append(f"reg {_width_decl(reg.info.width)}{mod.net(reg.info.flat)};")
        for info in mod.combs:
            if info.flat in set(mod.outputs):
                continue
            body.append(f"wire {_width_decl(info.width)}{mod.net(info.flat)};")

        # shared subterm wires
        namer = _NodeNamer(mod)
        exprs: list[str] = []
        for info in mod.combs:
            ref = namer.ref(design.comb_equations[info.flat], exprs)
            exprs.append(f"assign {mod.net(info.flat)} = {ref};")

        always: list[str] = []
        for reg in mod.regs:
            stmts: list[str] = []
            name = mod.net(reg.info.flat)
            if reg.pulse:
                stmts.append(f"{name} <= 1'b0;")
            for site in reg.sites:
                guard = site.guard_term()
                rhs_term = (
                    site.assign.rhs if site.assign is not None else terms.const(1, 1)
                )
                rhs = namer.ref(rhs_term, exprs)
                target = name
                if site.assign is not None and site.assign.index is not None:
                    target = f"{name}[{namer.ref(site.assign.index, exprs)}]"
                if guard.kind == "const" and guard.value == 1:
                    stmts.append(f"{target} <= {rhs};")
                else:
                    stmts.append(f"if ({namer.ref(guard, exprs)}) {target} <= {rhs};")
            always.append("always @(posedge clk) begin")
            always.extend(f"    {s}" for s in stmts)
            always.append("end")

        init: list[str] = []
        for reg in mod.regs:
            name = mod.net(reg.info.flat)
            if reg.info.depth is not None:
                for k in range(reg.info.depth):
                    init.append(f"initial {name}[{k}] = {reg.info.width}'d0;")
            else:
                init.append(f"initial {name} = {reg.info.width}'d0;")

        insts: list[str] = []
        for child in mod.inst.children:
            child_mod = self.modules[child.path]
            conns = []
            for port, flat in self._child_ports(child.path):
                conns.append(f".{port}(clk)" if flat == "clk" else f".{port}({mod.net(flat)})")
            insts.append(f"{child_mod.name} {mangle(child.name)} ({', '.join(conns)});")

        # wires that exist only to connect child ports to each other
        defined = {mod.net(r.info.flat) for r in mod.regs}
        defined.update(mod.net(i.flat) for i in mod.combs)
        defined.update(mod.net(flat) for flat in set(mod.inputs) | set(mod.outputs))
        feed: list[str] = []
        for flat, net in sorted(mod.nets.items()):
            if net in defined or net == "clk":
                continue
            info = design.signals.get(flat)
            if info is None:
                continue
            feed.append(f"wire {_width_decl(info.width)}{net};")

        lines.append(f"module {mod.name} (")
        lines.append(",\n".join(f"    {p}" for p in port_decls))
        lines.append(");")
        lines.append("")
        for chunk in (body, feed, namer.decls, exprs, init, always, insts):
            if chunk:
                lines.extend(chunk)
                lines.append("")
        lines.append("endmodule")
        return "\n".join(lines) + "\n"


class _NodeNamer:
    """Names every compound term node as its own exact-width wire."""

    def __init__(self, mod: _Module):
        self.mod = mod
        self.named: dict[int, str] = {}
        self.decls: list[str] = []
        self.count = 0

    def ref(self, term: Term, exprs: list[str]) -> str:
        if term.kind == "const":
            return f"{term.width}'d{term.value}"
        if term.kind == "var":
            name = term.name
            if name.endswith("]"):
                cut = name.rfind("[")
                return f"{self.mod.net(name[:cut])}[{name[cut + 1:-1]}]"
            return self.mod.net(name)
        hit = self.named.get(term.id)
        if hit is not None:
            return hit
        args = [self.ref(a, exprs) for a in term.args]
        expr = self._render(term, args)
        name = f"n{self.count}"
        while name in self.mod.taken:
            self.count += 1
            name = f"n{self.count}"
        self.mod.taken.add(name)
        self.count += 1
        self.decls.append(f"wire {_width_decl(term.width)}{name};")
        exprs.append(f"assign {name} = {expr};")
        self.named[term.id] = name
        return name

    def _render(self, term: Term, args: list[str]) -> str:
        kind = term.kind
        if kind == "and":
            return " & ".join(args)
        if kind == "or":
            return " | ".join(args)
        if kind == "xor":
            return " ^ ".join(args)
        if kind == "add":
            return " + ".join(args)
        if kind == "sub":
            return f"{args[0]} - {args[1]}"
        if kind == "not":
            return f"~{args[0]}"
        if kind == "eq":
            return f"{args[0]} == {args[1]}"
        if kind == "lt":
            return f"{args[0]} < {args[1]}"
        if kind == "shl":
            return f"{args[0]} << {args[1]}"
        if kind == "shr":
            return f"{args[0]} >> {args[1]}"
        if kind == "select":
            if term.width == 1:
                return f"{args[0]}[{term.lo}]"
            return f"{args[0]}[{term.hi}:{term.lo}]"
        if kind == "concat":
            return "{" + ", ".join(args) + "}"
        if kind == "ite":
            return f"{args[0]} ? {args[1]} : {args[2]}"
        raise ValueError(f"cannot render term kind {kind!r}")


@dataclass
class RtlEmission:
    files: dict[str, str]
    top_module: str
    signal_map: dict[str, str]  # design flat name -> flattened simulator name


def _common_ancestor(paths: set[str]) -> str:
    split = [p.split("/") if p else [] for p in paths]
    prefix = split[0]
    for parts in split[1:]:
        keep = 0
        for a, b in zip(prefix, parts):
            if a != b:
                break
            keep += 1
        prefix = prefix[:keep]
    return "/".join(prefix)


def emit_design(design: Design) -> RtlEmission:
    emitter = _Emitter(design)
    files = emitter.emit()
    signal_map: dict[str, str] = {}
    for info in design.signals.values():
        carriers = set(emitter.uses.get(info.flat, ()))
        carriers.add("" if info.flat in emitter.ext else info.owner)
        lca = _common_ancestor(carriers)
        local = emitter.modules[lca].net(info.flat)
        prefix = "" if lca == "" else lca.replace("/", ".") + "."
        signal_map[info.flat] = prefix + local
    return RtlEmission(
        files=files,
        top_module=emitter.modules[""].name,
        signal_map=signal_map,
    )


def emit_rtl(design: Design) -> dict[str, str]:
    """The design as Verilog text, one entry per module file."""
    return emit_design(design).files
