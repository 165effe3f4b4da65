"""AST for the transaction-level source language.

Element names carry their kind prefix (c_, d_, tr_, vtr_); clusters either
use the `cluster` keyword or a cl_ prefix. Every node keeps its span so
diagnostics can point into the original text.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .source import NO_SPAN, Span

# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Expr:
    span: Span = field(default=NO_SPAN, compare=False)
    # width is filled in by the resolver; None until then.
    width: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Ident(Expr):
    name: str = ""


@dataclass(frozen=True)
class Literal(Expr):
    value: int = 0
    declared_width: int | None = None  # None for bare decimals


@dataclass(frozen=True)
class Unary(Expr):
    op: str = ""  # ~ ! -
    operand: Expr | None = None


@dataclass(frozen=True)
class Binary(Expr):
    op: str = ""  # == != < & | ^ + - << >> && ||
    left: Expr | None = None
    right: Expr | None = None


@dataclass(frozen=True)
class PartSelect(Expr):
    """base[hi:lo] on a scalar signal; bounds must resolve to constants."""

    base: Expr | None = None
    hi: Expr | None = None
    lo: Expr | None = None


@dataclass(frozen=True)
class Index(Expr):
    """base[idx]: bit-select on scalars (constant idx), element select on arrays."""

    base: Expr | None = None
    index: Expr | None = None


@dataclass(frozen=True)
class Concat(Expr):
    parts: tuple[Expr, ...] = ()  # parts[0] is the MSB group


# ---------------------------------------------------------------------------
# Cluster elements


@dataclass(frozen=True)
class SignalDecl:
    name: str
    width: int
    depth: int | None = None  # None: scalar; else array of `depth` elements
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class ConditionDecl:
    """c_name { if (expr) this; }  or a bodiless, externally driven condition."""

    name: str
    body: Expr | None = None
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Assign:
    target: str
    index: Expr | None  # array element write when not None
    rhs: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class DatapathDecl:
    name: str
    assigns: tuple[Assign, ...] = ()
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class TrItem:
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class TrApplyDatapath(TrItem):
    name: str = ""


@dataclass(frozen=True)
class TrDriveCondition(TrItem):
    name: str = ""


@dataclass(frozen=True)
class TrApplyTransaction(TrItem):
    name: str = ""


@dataclass(frozen=True)
class TrGuard(TrItem):
    """@guard { items }; guard `e_clk` marks the clock edge region."""

    guard: str = ""
    unique: bool = False
    items: tuple[TrItem, ...] = ()


@dataclass(frozen=True)
class TransactionDecl:
    name: str
    items: tuple[TrItem, ...] = ()
    span: Span = field(default=NO_SPAN, compare=False)


# ---------------------------------------------------------------------------
# Sequences and statements


@dataclass(frozen=True)
class Stmt:
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class ApplyDatapath(Stmt):
    name: str = ""


@dataclass(frozen=True)
class DriveCondition(Stmt):
    name: str = ""


@dataclass(frozen=True)
class ApplyTransaction(Stmt):
    name: str = ""


@dataclass(frozen=True)
class CallVtr(Stmt):
    name: str = ""


@dataclass(frozen=True)
class Goto(Stmt):
    state: str = ""


@dataclass(frozen=True)
class WaitGuard(Stmt):
    condition: str = ""
    body: tuple[Stmt, ...] = ()


@dataclass(frozen=True)
class Random(Stmt):
    signal: str = ""


@dataclass(frozen=True)
class Cover(Stmt):
    name: str = ""  # cp_* coverage point name
    conditions: tuple[str, ...] = ()


@dataclass(frozen=True)
class ForkJoin(Stmt):
    branches: tuple[tuple[Stmt, ...], ...] = ()


@dataclass(frozen=True)
class Exit(Stmt):
    pass


@dataclass(frozen=True)
class SeqState:
    name: str
    body: tuple[Stmt, ...]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class SequenceDecl:
    """FSM starting at `init`; `exit` ends it. The first state must be init."""

    name: str
    states: tuple[SeqState, ...]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class VtrDecl:
    name: str
    sequence: SequenceDecl
    span: Span = field(default=NO_SPAN, compare=False)


# ---------------------------------------------------------------------------
# Clusters, SVA carry-through, build commands


@dataclass(frozen=True)
class SvaBlock:
    """Raw text of an inline sva { ... } block, lowered by the sva bridge."""

    text: str
    span: Span = field(default=NO_SPAN, compare=False)
    # where `text` starts in the enclosing file, for relocating diagnostics
    body: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class ClusterDecl:
    name: str
    signals: tuple[SignalDecl, ...] = ()
    conditions: tuple[ConditionDecl, ...] = ()
    datapaths: tuple[DatapathDecl, ...] = ()
    transactions: tuple[TransactionDecl, ...] = ()
    vtrs: tuple[VtrDecl, ...] = ()
    sva_blocks: tuple[SvaBlock, ...] = ()
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class BuildStmt:
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class BuildInstance(BuildStmt):
    name: str = ""
    role: str = ""  # "" or "DUV"
    body: tuple[BuildStmt, ...] = ()


@dataclass(frozen=True)
class Join(BuildStmt):
    """join <source> <target>; source is a named or inline cluster."""

    source: str | ClusterDecl = ""
    target: str = ""


@dataclass(frozen=True)
class BuildDecl:
    name: str
    role: str
    body: tuple[BuildStmt, ...]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class SourceUnit:
    clusters: tuple[ClusterDecl, ...] = ()
    builds: tuple[BuildDecl, ...] = ()
    filename: str = "<input>"


ELEMENT_PREFIXES = ("c_", "d_", "tr_", "vtr_", "cp_", "e_", "cl_")


def element_kind(name: str) -> str | None:
    """Kind implied by a name prefix, or None for plain identifiers."""
    if name.startswith("vtr_"):
        return "vtr"
    if name.startswith("tr_"):
        return "transaction"
    if name.startswith("cl_"):
        return "cluster"
    if name.startswith("cp_"):
        return "cover"
    if name.startswith("c_"):
        return "condition"
    if name.startswith("d_"):
        return "datapath"
    if name.startswith("e_"):
        return "edge"
    return None
