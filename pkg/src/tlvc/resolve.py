"""Name resolution and lowering of source expressions to terms.

Lowered expressions are terms over variables named by flattened per-instance
signal names (array elements get an `[index]` suffix). Evaluating an
expression against a symbolic state is then just substitution.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ast, terms
from .source import CompileError, Span
from .terms import Term


@dataclass(frozen=True)
class SignalEntry:
    """A resolvable name: a declared signal or a condition (1-bit)."""

    flat: str
    width: int
    depth: int | None = None
    is_condition: bool = False


def elem_name(flat: str, index: int) -> str:
    return f"{flat}[{index}]"


class Scope:
    def __init__(self, entries: dict[str, SignalEntry]):
        self.entries = entries

    def lookup(self, name: str, span: Span) -> SignalEntry:
        entry = self.entries.get(name)
        if entry is not None:
            return entry
        kind = ast.element_kind(name)
        if kind in ("datapath", "transaction", "vtr", "cover", "edge"):
            raise CompileError(f"{kind} {name!r} cannot appear in an expression", span)
        raise CompileError(f"unknown signal or condition {name!r}", span)


def lower(expr: ast.Expr, scope: Scope) -> Term:
    """Lower an expression to a term, checking names, widths, and bounds."""
    if isinstance(expr, ast.Literal):
        if expr.declared_width is not None:
            return terms.const(expr.value, expr.declared_width)
        return terms.const(expr.value, max(1, expr.value.bit_length()))
    if isinstance(expr, ast.Ident):
        entry = scope.lookup(expr.name, expr.span)
        if entry.depth is not None:
            raise CompileError(f"array signal {expr.name!r} must be indexed", expr.span)
        return terms.var(entry.flat, entry.width)
    if isinstance(expr, ast.Unary):
        operand = lower(expr.operand, scope)
        if expr.op == "~":
            return terms.not_(operand)
        if expr.op == "!":
            return terms.not_(terms.to_bool(operand))
        if expr.op == "-":
            return terms.sub(terms.const(0, operand.width), operand)
        raise CompileError(f"unknown unary operator {expr.op!r}", expr.span)
    if isinstance(expr, ast.Binary):
        return _lower_binary(expr, scope)
    if isinstance(expr, ast.PartSelect):
        base = lower(expr.base, scope)
        hi = _const_bound(expr.hi, scope, "part-select upper bound")
        lo = _const_bound(expr.lo, scope, "part-select lower bound")
        if not (0 <= lo <= hi):
            raise CompileError(f"part-select bounds [{hi}:{lo}] are inverted", expr.span)
        if hi >= base.width:
            raise CompileError(
                f"part-select [{hi}:{lo}] exceeds operand width {base.width}", expr.span
            )
        return terms.select(base, hi, lo)
    if isinstance(expr, ast.Index):
        return _lower_index(expr, scope)
    if isinstance(expr, ast.Concat):
        parts = [lower(p, scope) for p in expr.parts]
        return terms.concat(*parts)
    raise CompileError(f"unhandled expression form {type(expr).__name__}", expr.span)


def _lower_binary(expr: ast.Binary, scope: Scope) -> Term:
    op = expr.op
    left = lower(expr.left, scope)
    right = lower(expr.right, scope)
    if op == "&&":
        return terms.and_(terms.to_bool(left), terms.to_bool(right))
    if op == "||":
        return terms.or_(terms.to_bool(left), terms.to_bool(right))
    if op in ("<<", ">>"):
        return terms.shl(left, right) if op == "<<" else terms.shr(left, right)
    width = max(left.width, right.width)
    left = terms.zext(left, width)
    right = terms.zext(right, width)
    if op == "&":
        return terms.and_(left, right)
    if op == "|":
        return terms.or_(left, right)
    if op == "^":
        return terms.xor(left, right)
    if op == "+":
        return terms.add(left, right)
    if op == "-":
        return terms.sub(left, right)
    if op == "==":
        return terms.eq(left, right)
    if op == "!=":
        return terms.not_(terms.eq(left, right))
    if op == "<":
        return terms.lt(left, right)
    if op == ">":
        return terms.lt(right, left)
    if op == "<=":
        return terms.not_(terms.lt(right, left))
    if op == ">=":
        return terms.not_(terms.lt(left, right))
    raise CompileError(f"unknown binary operator {op!r}", expr.span)


def _const_bound(expr: ast.Expr, scope: Scope, what: str) -> int:
    term = lower(expr, scope)
    if term.kind != "const":
        raise CompileError(f"{what} must be a constant expression", expr.span)
    return term.value


def _lower_index(expr: ast.Index, scope: Scope) -> Term:
    if not isinstance(expr.base, ast.Ident):
        base = lower(expr.base, scope)
        return _dynamic_bit(base, expr, scope)
    entry = scope.lookup(expr.base.name, expr.base.span)
    if entry.depth is None:
        base = terms.var(entry.flat, entry.width)
        return _dynamic_bit(base, expr, scope)
    index = lower(expr.index, scope)
    if index.kind == "const":
        if index.value >= entry.depth:
            raise CompileError(
                f"index {index.value} out of range for array of depth {entry.depth}", expr.span
            )
        return terms.var(elem_name(entry.flat, index.value), entry.width)
    return array_read(entry, index)


def array_read(entry: SignalEntry, index: Term) -> Term:
    """Mux chain over array elements; out-of-range reads yield zero."""
    assert entry.depth is not None
    result = terms.const(0, entry.width)
    for k in range(entry.depth - 1, -1, -1):
        hit = terms.eq(index, terms.const(k, index.width))
        result = terms.ite(hit, terms.var(elem_name(entry.flat, k), entry.width), result)
    return result


def _dynamic_bit(base: Term, expr: ast.Index, scope: Scope) -> Term:
    """Single-bit select with a possibly symbolic position."""
    index = lower(expr.index, scope)
    if index.kind == "const":
        if index.value >= base.width:
            raise CompileError(
                f"bit index {index.value} out of range for width {base.width}", expr.span
            )
        return terms.select(base, index.value, index.value)
    return terms.select(terms.shr(base, index), 0, 0)


@dataclass(frozen=True)
class LoweredAssign:
    """One datapath assignment, lowered: `flat[index] = rhs` (index optional)."""

    flat: str
    width: int
    depth: int | None
    index: Term | None
    rhs: Term
    span: Span


def lower_assign(assign: ast.Assign, scope: Scope) -> LoweredAssign:
    entry = scope.lookup(assign.target, assign.span)
    if entry.is_condition:
        raise CompileError(
            f"conditions cannot be assigned in datapaths: {assign.target!r}", assign.span
        )
    index_term = None
    if entry.depth is not None:
        if assign.index is None:
            raise CompileError(f"array signal {assign.target!r} must be written per element", assign.span)
        index_term = lower(assign.index, scope)
        if index_term.kind == "const" and index_term.value >= entry.depth:
            raise CompileError(
                f"index {index_term.value} out of range for array of depth {entry.depth}", assign.span
            )
    elif assign.index is not None:
        raise CompileError(f"signal {assign.target!r} is not an array", assign.span)
    rhs = lower(assign.rhs, scope)
    if rhs.width > entry.width:
        raise CompileError(
            f"cannot assign {rhs.width} bits to {entry.width}-bit signal {assign.target!r}"
            " (select the bits explicitly)",
            assign.span,
        )
    rhs = terms.zext(rhs, entry.width)
    return LoweredAssign(
        flat=entry.flat, width=entry.width, depth=entry.depth, index=index_term, rhs=rhs, span=assign.span
    )


def lower_condition_body(body: ast.Expr, scope: Scope) -> Term:
    return terms.to_bool(lower(body, scope))
