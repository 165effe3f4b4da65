"""Hash-consed bit-vector terms with normalizing constructors.

Every term is interned, so object identity doubles as structural equality.
The constructors fold constants totally and apply a set of rewrite rules
(select/concat fusion, pushing selects through bitwise operators, equality
splitting over concatenations) that let many proof obligations reduce to the
constant 1 without enumeration.
"""

from __future__ import annotations

from typing import Callable, Iterable

_INTERN: dict[tuple, "Term"] = {}
_NEXT_ID = 0


def mask(width: int) -> int:
    return (1 << width) - 1


class Term:
    """An immutable node in the term DAG. Build via the module constructors."""

    __slots__ = ("id", "kind", "width", "args", "name", "value", "lo")

    def __init__(self, tid: int, kind: str, width: int, args: tuple, name: str, value: int, lo: int):
        self.id = tid
        self.kind = kind
        self.width = width
        self.args = args
        self.name = name
        self.value = value
        self.lo = lo

    @property
    def hi(self) -> int:
        return self.lo + self.width - 1

    def __repr__(self) -> str:
        return f"<{to_text(self)}:{self.width}>"


def _mk(kind: str, width: int, args: tuple = (), name: str = "", value: int = 0, lo: int = 0) -> Term:
    global _NEXT_ID
    key = (kind, width, args, name, value, lo)
    found = _INTERN.get(key)
    if found is not None:
        return found
    term = Term(_NEXT_ID, kind, width, args, name, value, lo)
    _NEXT_ID += 1
    _INTERN[key] = term
    return term


def const(value: int, width: int) -> Term:
    if width < 1:
        raise ValueError("term width must be >= 1")
    return _mk("const", width, value=value & mask(width))


TRUE = None  # filled below
FALSE = None


def var(name: str, width: int) -> Term:
    if width < 1:
        raise ValueError("term width must be >= 1")
    return _mk("var", width, name=name)


def not_(a: Term) -> Term:
    if a.kind == "const":
        return const(~a.value, a.width)
    if a.kind == "not":
        return a.args[0]
    return _mk("not", a.width, (a,))


def _assoc(kind: str, operands: Iterable[Term], fold, unit_for) -> Term:
    """Flatten an associative/commutative operator, folding constants."""
    width = None
    flat: list[Term] = []
    acc = None
    for op in operands:
        if width is None:
            width = op.width
            acc = unit_for(width)
        elif op.width != width:
            raise ValueError(f"width mismatch in {kind}: {op.width} vs {width}")
        if op.kind == kind:
            for sub in op.args:
                if sub.kind == "const":
                    acc = fold(acc, sub.value)
                else:
                    flat.append(sub)
        elif op.kind == "const":
            acc = fold(acc, op.value)
        else:
            flat.append(op)
    assert width is not None and acc is not None
    acc &= mask(width)
    return _assoc_finish(kind, width, flat, acc, unit_for(width))


def _assoc_finish(kind: str, width: int, flat: list[Term], acc: int, unit: int) -> Term:
    full = mask(width)
    if kind == "and":
        if acc == 0:
            return const(0, width)
        seen = {t.id for t in flat}
        for t in flat:
            if t.kind == "not" and t.args[0].id in seen:
                return const(0, width)
        flat = sorted(_dedup(flat), key=lambda t: t.id)
        if acc != full:
            flat.append(const(acc, width))
    elif kind == "or":
        if acc == full:
            return const(full, width)
        seen = {t.id for t in flat}
        for t in flat:
            if t.kind == "not" and t.args[0].id in seen:
                return const(full, width)
        flat = sorted(_dedup(flat), key=lambda t: t.id)
        if acc != 0:
            flat.append(const(acc, width))
    elif kind == "xor":
        counts: dict[int, tuple[Term, int]] = {}
        for t in flat:
            prev = counts.get(t.id)
            counts[t.id] = (t, (prev[1] + 1) if prev else 1)
        flat = sorted((t for t, n in counts.values() if n % 2 == 1), key=lambda t: t.id)
        if not flat:
            return const(acc, width)
        if acc == full:
            rest = _assoc_finish("xor", width, list(flat), 0, 0)
            return not_(rest)
        if acc != 0:
            flat.append(const(acc, width))
    elif kind == "add":
        flat = sorted(flat, key=lambda t: t.id)
        if acc != 0:
            flat.append(const(acc, width))
    if not flat:
        return const(unit, width)
    if len(flat) == 1:
        return flat[0]
    return _mk(kind, width, tuple(flat))


def _dedup(parts: list[Term]) -> list[Term]:
    seen: set[int] = set()
    out: list[Term] = []
    for t in parts:
        if t.id not in seen:
            seen.add(t.id)
            out.append(t)
    return out


def and_(*operands: Term) -> Term:
    return _assoc("and", operands, lambda a, v: a & v, mask)


def or_(*operands: Term) -> Term:
    return _assoc("or", operands, lambda a, v: a | v, lambda w: 0)


def xor(*operands: Term) -> Term:
    return _assoc("xor", operands, lambda a, v: a ^ v, lambda w: 0)


def add(*operands: Term) -> Term:
    return _assoc("add", operands, lambda a, v: a + v, lambda w: 0)


def sub(a: Term, b: Term) -> Term:
    if a.width != b.width:
        raise ValueError(f"width mismatch in sub: {a.width} vs {b.width}")
    if b.kind == "const":
        if b.value == 0:
            return a
        if a.kind == "const":
            return const(a.value - b.value, a.width)
        return add(a, const(-b.value, a.width))
    if a is b:
        return const(0, a.width)
    return _mk("sub", a.width, (a, b))


def eq(a: Term, b: Term) -> Term:
    if a.width != b.width:
        raise ValueError(f"width mismatch in eq: {a.width} vs {b.width}")
    if a is b:
        return const(1, 1)
    if a.kind == "const" and b.kind != "const":
        a, b = b, a
    if b.kind == "const":
        if a.kind == "const":
            return const(1 if a.value == b.value else 0, 1)
        if a.width == 1:
            return a if b.value == 1 else not_(a)
        if a.kind == "not":
            return eq(a.args[0], const(~b.value, a.width))
        if a.kind == "concat":
            return _eq_concat_const(a, b.value)
        if a.kind in ("xor", "add") and a.args[-1].kind == "const":
            c = a.args[-1]
            rest = list(a.args[:-1])
            inner = rest[0] if len(rest) == 1 else _mk(a.kind, a.width, tuple(rest))
            if a.kind == "xor":
                return eq(inner, const(b.value ^ c.value, a.width))
            return eq(inner, const(b.value - c.value, a.width))
        if a.kind == "ite" and a.args[1].kind == "const" and a.args[2].kind == "const":
            return ite(a.args[0], eq(a.args[1], b), eq(a.args[2], b))
    if a.kind == "concat" and b.kind == "concat" and _widths(a) == _widths(b):
        parts = [eq(x, y) for x, y in zip(a.args, b.args)]
        return and_(*parts)
    if a.id > b.id:
        a, b = b, a
    return _mk("eq", 1, (a, b))


def _widths(t: Term) -> tuple[int, ...]:
    return tuple(p.width for p in t.args)


def _eq_concat_const(a: Term, value: int) -> Term:
    parts = []
    offset = a.width
    for p in a.args:
        offset -= p.width
        parts.append(eq(p, const((value >> offset) & mask(p.width), p.width)))
    return and_(*parts)


def lt(a: Term, b: Term) -> Term:
    """Unsigned less-than."""
    if a.width != b.width:
        raise ValueError(f"width mismatch in lt: {a.width} vs {b.width}")
    if a is b:
        return const(0, 1)
    if a.kind == "const" and b.kind == "const":
        return const(1 if a.value < b.value else 0, 1)
    if b.kind == "const" and b.value == 0:
        return const(0, 1)
    if a.kind == "const" and a.value == 0:
        return not_(eq(b, const(0, b.width)))
    if a.kind == "const" and a.value == mask(a.width):
        return const(0, 1)
    return _mk("lt", 1, (a, b))


def shl(a: Term, b: Term) -> Term:
    if b.kind == "const":
        n = b.value
        if n == 0:
            return a
        if n >= a.width:
            return const(0, a.width)
        return concat(select(a, a.width - 1 - n, 0), const(0, n))
    return _mk("shl", a.width, (a, b))


def shr(a: Term, b: Term) -> Term:
    if b.kind == "const":
        n = b.value
        if n == 0:
            return a
        if n >= a.width:
            return const(0, a.width)
        return concat(const(0, n), select(a, a.width - 1, n))
    return _mk("shr", a.width, (a, b))


def select(a: Term, hi: int, lo: int) -> Term:
    if not (0 <= lo <= hi < a.width):
        raise ValueError(f"select bounds [{hi}:{lo}] out of range for width {a.width}")
    width = hi - lo + 1
    if width == a.width:
        return a
    if a.kind == "const":
        return const(a.value >> lo, width)
    if a.kind == "select":
        return select(a.args[0], a.lo + hi, a.lo + lo)
    if a.kind == "concat":
        return _select_concat(a, hi, lo)
    if a.kind == "ite":
        return ite(a.args[0], select(a.args[1], hi, lo), select(a.args[2], hi, lo))
    if a.kind == "not":
        return not_(select(a.args[0], hi, lo))
    if a.kind in ("and", "or", "xor"):
        parts = [select(p, hi, lo) for p in a.args]
        return _assoc(a.kind, parts, _FOLDS[a.kind], _UNITS[a.kind])
    if a.kind in ("add", "sub") and hi + 1 < a.width:
        truncated = _truncate(a, hi + 1)
        return select(truncated, hi, lo) if lo else truncated
    return _mk("select", width, (a,), lo=lo)


_FOLDS = {"and": lambda a, v: a & v, "or": lambda a, v: a | v, "xor": lambda a, v: a ^ v}
_UNITS = {"and": mask, "or": lambda w: 0, "xor": lambda w: 0}


def _truncate(a: Term, width: int) -> Term:
    """Truncation distributes over modular add/sub."""
    if a.kind == "add":
        return add(*[select(p, width - 1, 0) for p in a.args])
    return sub(select(a.args[0], width - 1, 0), select(a.args[1], width - 1, 0))


def _select_concat(a: Term, hi: int, lo: int) -> Term:
    pieces: list[Term] = []
    offset = a.width
    for p in a.args:
        offset -= p.width
        p_hi, p_lo = offset + p.width - 1, offset
        take_hi = min(hi, p_hi)
        take_lo = max(lo, p_lo)
        if take_hi >= take_lo:
            pieces.append(select(p, take_hi - p_lo, take_lo - p_lo))
    return concat(*pieces)


def concat(*operands: Term) -> Term:
    """Concatenate, most-significant part first."""
    flat: list[Term] = []
    for op in operands:
        if op.kind == "concat":
            flat.extend(op.args)
        else:
            flat.append(op)
    if not flat:
        raise ValueError("empty concat")
    merged: list[Term] = []
    for part in flat:
        if merged:
            joined = _merge_pair(merged[-1], part)
            if joined is not None:
                merged[-1] = joined
                continue
        merged.append(part)
    if len(merged) == 1:
        return merged[0]
    width = sum(p.width for p in merged)
    return _mk("concat", width, tuple(merged))


def _merge_pair(left: Term, right: Term) -> Term | None:
    """Fuse two adjacent concat parts when they form one constant or one slice."""
    if left.kind == "const" and right.kind == "const":
        return const((left.value << right.width) | right.value, left.width + right.width)
    lb = _slice_of(left)
    rb = _slice_of(right)
    if lb and rb and lb[0] is rb[0] and lb[2] == rb[1] + 1:
        return select(lb[0], lb[1], rb[2])
    return None


def _slice_of(t: Term) -> tuple[Term, int, int] | None:
    """View a term as (base, hi, lo) when it is a slice of something."""
    if t.kind == "select":
        return (t.args[0], t.hi, t.lo)
    if t.kind == "var":
        return (t, t.width - 1, 0)
    return None


def ite(cond: Term, then: Term, orelse: Term) -> Term:
    if cond.width != 1:
        raise ValueError("ite condition must be 1 bit wide")
    if then.width != orelse.width:
        raise ValueError(f"width mismatch in ite: {then.width} vs {orelse.width}")
    if cond.kind == "const":
        return then if cond.value else orelse
    if then is orelse:
        return then
    if cond.kind == "not":
        return ite(cond.args[0], orelse, then)
    if then.width == 1 and then.kind == "const" and orelse.kind == "const":
        return cond if then.value == 1 else not_(cond)
    if orelse.kind == "ite" and orelse.args[0] is cond:
        return ite(cond, then, orelse.args[2])
    if then.kind == "ite" and then.args[0] is cond:
        return ite(cond, then.args[1], orelse)
    return _mk("ite", then.width, (cond, then, orelse))


def and_list(operands: Iterable[Term]) -> Term:
    ops = list(operands)
    if not ops:
        return const(1, 1)
    return and_(*ops)


def to_bool(a: Term) -> Term:
    """Truthiness of a bit vector as a 1-bit term."""
    if a.width == 1:
        return a
    return not_(eq(a, const(0, a.width)))


def zext(a: Term, width: int) -> Term:
    if width < a.width:
        raise ValueError("zext cannot narrow")
    if width == a.width:
        return a
    return concat(const(0, width - a.width), a)


# -- queries ---------------------------------------------------------------


def free_vars(t: Term) -> dict[str, int]:
    """Free variables with widths, keyed by name, sorted by name."""
    found: dict[str, int] = {}
    seen: set[int] = set()
    stack = [t]
    while stack:
        node = stack.pop()
        if node.id in seen:
            continue
        seen.add(node.id)
        if node.kind == "var":
            found[node.name] = node.width
        stack.extend(node.args)
    return dict(sorted(found.items()))


def substitute(t: Term, env: dict[str, Term]) -> Term:
    memo: dict[int, Term] = {}

    def walk(node: Term) -> Term:
        hit = memo.get(node.id)
        if hit is not None:
            return hit
        if node.kind == "var":
            result = env.get(node.name, node)
            if result.width != node.width:
                raise ValueError(f"substitution width mismatch for {node.name}")
        elif not node.args:
            result = node
        else:
            result = rebuild(node, tuple(walk(a) for a in node.args))
        memo[node.id] = result
        return result

    return walk(t)


def rebuild(node: Term, args: tuple[Term, ...]) -> Term:
    """Re-run the normalizing constructor for a node with new children."""
    if args == node.args:
        return node
    kind = node.kind
    if kind in ("and", "or", "xor", "add"):
        return _assoc(kind, args, _ALL_FOLDS[kind], _ALL_UNITS[kind])
    if kind == "not":
        return not_(args[0])
    if kind == "sub":
        return sub(args[0], args[1])
    if kind == "eq":
        return eq(args[0], args[1])
    if kind == "lt":
        return lt(args[0], args[1])
    if kind == "shl":
        return shl(args[0], args[1])
    if kind == "shr":
        return shr(args[0], args[1])
    if kind == "select":
        return select(args[0], node.hi, node.lo)
    if kind == "concat":
        return concat(*args)
    if kind == "ite":
        return ite(args[0], args[1], args[2])
    raise TypeError(f"cannot rebuild {kind}")


_ALL_FOLDS = dict(_FOLDS)
_ALL_FOLDS["add"] = lambda a, v: a + v
_ALL_UNITS = dict(_UNITS)
_ALL_UNITS["add"] = lambda w: 0


# -- evaluation -------------------------------------------------------------


def eval_term(t: Term, env: dict[str, int]) -> int:
    memo: dict[int, int] = {}

    def walk(node: Term) -> int:
        hit = memo.get(node.id)
        if hit is not None:
            return hit
        value = _eval_node(node, walk, env)
        memo[node.id] = value
        return value

    return walk(t)


def _eval_node(node: Term, walk, env: dict[str, int]) -> int:
    kind = node.kind
    if kind == "const":
        return node.value
    if kind == "var":
        try:
            return env[node.name] & mask(node.width)
        except KeyError:
            raise KeyError(f"no value for variable {node.name!r}") from None
    if kind == "and":
        acc = mask(node.width)
        for a in node.args:
            acc &= walk(a)
        return acc
    if kind == "or":
        acc = 0
        for a in node.args:
            acc |= walk(a)
        return acc
    if kind == "xor":
        acc = 0
        for a in node.args:
            acc ^= walk(a)
        return acc
    if kind == "add":
        acc = 0
        for a in node.args:
            acc += walk(a)
        return acc & mask(node.width)
    if kind == "sub":
        return (walk(node.args[0]) - walk(node.args[1])) & mask(node.width)
    if kind == "not":
        return ~walk(node.args[0]) & mask(node.width)
    if kind == "eq":
        return 1 if walk(node.args[0]) == walk(node.args[1]) else 0
    if kind == "lt":
        return 1 if walk(node.args[0]) < walk(node.args[1]) else 0
    if kind == "shl":
        n = walk(node.args[1])
        return (walk(node.args[0]) << min(n, node.width)) & mask(node.width)
    if kind == "shr":
        n = walk(node.args[1])
        return walk(node.args[0]) >> min(n, node.width)
    if kind == "select":
        return (walk(node.args[0]) >> node.lo) & mask(node.width)
    if kind == "concat":
        acc = 0
        for a in node.args:
            acc = (acc << a.width) | walk(a)
        return acc
    if kind == "ite":
        return walk(node.args[1]) if walk(node.args[0]) else walk(node.args[2])
    raise TypeError(f"cannot evaluate {kind}")


def compile_term(t: Term, var_order: list[str]) -> Callable[..., int]:
    """Compile a term into a Python function of the named variables.

    Shared subterms are computed once; the function is the hot path of
    bounded enumeration.
    """
    order: list[Term] = []
    seen: set[int] = set()

    def post(node: Term) -> None:
        if node.id in seen:
            return
        seen.add(node.id)
        for a in node.args:
            post(a)
        order.append(node)

    post(t)
    names = {name: f"v{i}" for i, name in enumerate(var_order)}
    lines = [f"def _fn({', '.join(names[n] for n in var_order)}):"]
    ref: dict[int, str] = {}
    for i, node in enumerate(order):
        ref[node.id] = expr = _compile_node(node, ref, names)
        if node is t:
            lines.append(f"    return {expr}")
            break
        if node.args or node.kind == "var":
            local = f"t{i}"
            lines.append(f"    {local} = {expr}")
            ref[node.id] = local
    namespace: dict = {}
    exec("\n".join(lines), namespace)
    return namespace["_fn"]


def _compile_node(node: Term, ref: dict[int, str], names: dict[str, str]) -> str:
    kind = node.kind
    m = mask(node.width)
    if kind == "const":
        return str(node.value)
    if kind == "var":
        return names[node.name]
    a = [ref[x.id] for x in node.args]
    if kind == "and":
        return " & ".join(a)
    if kind == "or":
        return " | ".join(a)
    if kind == "xor":
        return " ^ ".join(a)
    if kind == "add":
        return f"({' + '.join(a)}) & {m}"
    if kind == "sub":
        return f"({a[0]} - {a[1]}) & {m}"
    if kind == "not":
        return f"{a[0]} ^ {m}"
    if kind == "eq":
        return f"(1 if {a[0]} == {a[1]} else 0)"
    if kind == "lt":
        return f"(1 if {a[0]} < {a[1]} else 0)"
    if kind == "shl":
        return f"({a[0]} << min({a[1]}, {node.width})) & {m}"
    if kind == "shr":
        return f"{a[0]} >> min({a[1]}, {node.width})"
    if kind == "select":
        return f"({a[0]} >> {node.lo}) & {m}"
    if kind == "concat":
        parts = []
        shift = node.width
        for x, name in zip(node.args, a):
            shift -= x.width
            parts.append(f"({name} << {shift})" if shift else name)
        return " | ".join(parts)
    if kind == "ite":
        return f"({a[1]} if {a[0]} else {a[2]})"
    raise TypeError(f"cannot compile {kind}")


# -- rendering and hashing ---------------------------------------------------


def to_text(t: Term) -> str:
    """Human-readable rendering used in diagnostics and traces."""
    kind = t.kind
    if kind == "const":
        return f"{t.width}'d{t.value}"
    if kind == "var":
        return t.name
    if kind in ("and", "or", "xor", "add"):
        sym = {"and": " & ", "or": " | ", "xor": " ^ ", "add": " + "}[kind]
        return "(" + sym.join(to_text(a) for a in t.args) + ")"
    if kind == "sub":
        return f"({to_text(t.args[0])} - {to_text(t.args[1])})"
    if kind == "not":
        return f"~{to_text(t.args[0])}"
    if kind == "eq":
        return f"({to_text(t.args[0])} == {to_text(t.args[1])})"
    if kind == "lt":
        return f"({to_text(t.args[0])} < {to_text(t.args[1])})"
    if kind == "shl":
        return f"({to_text(t.args[0])} << {to_text(t.args[1])})"
    if kind == "shr":
        return f"({to_text(t.args[0])} >> {to_text(t.args[1])})"
    if kind == "select":
        return f"{to_text(t.args[0])}[{t.hi}:{t.lo}]"
    if kind == "concat":
        return "{" + ", ".join(to_text(a) for a in t.args) + "}"
    if kind == "ite":
        return f"({to_text(t.args[0])} ? {to_text(t.args[1])} : {to_text(t.args[2])})"
    raise TypeError(f"cannot render {kind}")


def serialize(t: Term, rename: dict[str, str] | None = None):
    """Canonical nested-tuple form, optionally renaming variables.

    With `rename` the caller controls variable identity; pass a dict that is
    filled in first-use order to compare states up to renaming.
    """
    memo: dict[int, tuple] = {}

    def walk(node: Term) -> tuple:
        hit = memo.get(node.id)
        if hit is not None:
            return hit
        if node.kind == "const":
            out = ("const", node.width, node.value)
        elif node.kind == "var":
            name = node.name
            if rename is not None:
                if name not in rename:
                    rename[name] = f"?{len(rename)}"
                name = rename[name]
            out = ("var", node.width, name)
        elif node.kind == "select":
            out = ("select", node.width, node.lo, walk(node.args[0]))
        else:
            out = (node.kind, node.width) + tuple(walk(a) for a in node.args)
        memo[node.id] = out
        return out

    return walk(t)


TRUE = const(1, 1)
FALSE = const(0, 1)
