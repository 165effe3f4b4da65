"""Canonical pretty-printer for parsed source units.

Printing a parsed unit and reparsing the output yields an equal tree, which
the test suite checks as a round-trip property.
"""

from __future__ import annotations

from . import ast

_PRECEDENCE = {
    "||": 1,
    "&&": 2,
    "|": 3,
    "^": 4,
    "&": 5,
    "==": 6,
    "!=": 6,
    "<": 7,
    ">": 7,
    "<=": 7,
    ">=": 7,
    "<<": 8,
    ">>": 8,
    "+": 9,
    "-": 9,
}
_UNARY_LEVEL = 10


def format_expr(expr: ast.Expr, parent_level: int = 0) -> str:
    text, level = _format(expr)
    if level < parent_level:
        return f"({text})"
    return text


def _format(expr: ast.Expr) -> tuple[str, int]:
    if isinstance(expr, ast.Literal):
        if expr.declared_width is not None:
            return f"{expr.declared_width}'d{expr.value}", 11
        return str(expr.value), 11
    if isinstance(expr, ast.Ident):
        return expr.name, 11
    if isinstance(expr, ast.Unary):
        inner = format_expr(expr.operand, _UNARY_LEVEL)
        return f"{expr.op}{inner}", _UNARY_LEVEL
    if isinstance(expr, ast.Binary):
        level = _PRECEDENCE[expr.op]
        left = format_expr(expr.left, level)
        right = format_expr(expr.right, level + 1)
        return f"{left} {expr.op} {right}", level
    if isinstance(expr, ast.PartSelect):
        base = format_expr(expr.base, _UNARY_LEVEL + 1)
        return f"{base}[{format_expr(expr.hi)}:{format_expr(expr.lo)}]", _UNARY_LEVEL + 1
    if isinstance(expr, ast.Index):
        base = format_expr(expr.base, _UNARY_LEVEL + 1)
        return f"{base}[{format_expr(expr.index)}]", _UNARY_LEVEL + 1
    if isinstance(expr, ast.Concat):
        parts = ", ".join(format_expr(p) for p in expr.parts)
        return f"{{{parts}}}", 11
    raise TypeError(f"unhandled expression node {type(expr).__name__}")


class _Printer:
    def __init__(self) -> None:
        self.lines: list[str] = []
        self.indent = 0

    def line(self, text: str = "") -> None:
        if text:
            self.lines.append("    " * self.indent + text)
        else:
            self.lines.append("")

    def block(self, header: str, emit_body, footer: str = "}") -> None:
        self.line(header)
        self.indent += 1
        emit_body()
        self.indent -= 1
        self.line(footer)

    # -- cluster members ---------------------------------------------------

    def signal(self, sig: ast.SignalDecl) -> None:
        if sig.depth is None:
            self.line(f"signal {sig.name}[{sig.width}];")
        else:
            self.line(f"signal {sig.name}[{sig.width}][{sig.depth}];")

    def condition(self, decl: ast.ConditionDecl) -> None:
        if decl.body is None:
            self.line(f"{decl.name} {{ }}")
        else:
            self.line(f"{decl.name} {{ if ({format_expr(decl.body)}) this; }}")

    def datapath(self, decl: ast.DatapathDecl) -> None:
        def body() -> None:
            for assign in decl.assigns:
                target = assign.target
                if assign.index is not None:
                    target += f"[{format_expr(assign.index)}]"
                self.line(f"{target} = {format_expr(assign.rhs)};")

        self.block(f"{decl.name} {{", body)

    def tr_items(self, items: tuple[ast.TrItem, ...]) -> None:
        for item in items:
            if isinstance(item, ast.TrGuard):
                prefix = "unique " if item.unique else ""
                self.block(f"{prefix}@{item.guard} {{", lambda it=item: self.tr_items(it.items))
            else:
                self.line(f"{item.name};")

    def transaction(self, decl: ast.TransactionDecl) -> None:
        self.block(f"{decl.name} {{", lambda: self.tr_items(decl.items))

    def stmts(self, body: tuple[ast.Stmt, ...]) -> None:
        for stmt in body:
            self.stmt(stmt)

    def stmt(self, stmt: ast.Stmt) -> None:
        if isinstance(stmt, (ast.ApplyDatapath, ast.DriveCondition, ast.ApplyTransaction, ast.CallVtr)):
            self.line(f"{stmt.name};")
        elif isinstance(stmt, ast.Goto):
            self.line(f"{stmt.state};")
        elif isinstance(stmt, ast.Random):
            self.line(f"random {stmt.signal};")
        elif isinstance(stmt, ast.Cover):
            def body() -> None:
                for cond in stmt.conditions:
                    self.line(f"{cond};")

            self.block(f"cover {stmt.name} {{", body)
        elif isinstance(stmt, ast.WaitGuard):
            self.block(f"@{stmt.condition} {{", lambda: self.stmts(stmt.body))
        elif isinstance(stmt, ast.Exit):
            self.line("exit;")
        elif isinstance(stmt, ast.ForkJoin):
            self.line("fork")
            for branch in stmt.branches:
                self.block("{", lambda b=branch: self.stmts(b))
            self.line("join;")
        else:
            raise TypeError(f"unhandled statement node {type(stmt).__name__}")

    def vtr(self, decl: ast.VtrDecl) -> None:
        def states() -> None:
            for state in decl.sequence.states:
                self.block(f"{state.name}: {{", lambda st=state: self.stmts(st.body))

        self.block(
            f"{decl.name} {{",
            lambda: self.block(f"sequence {decl.sequence.name} {{", states),
        )

    def cluster_body(self, cluster: ast.ClusterDecl) -> None:
        for sig in cluster.signals:
            self.signal(sig)
        for cond in cluster.conditions:
            self.condition(cond)
        for dp in cluster.datapaths:
            self.datapath(dp)
        for tr in cluster.transactions:
            self.transaction(tr)
        for vtr in cluster.vtrs:
            self.vtr(vtr)
        for sva in cluster.sva_blocks:
            self.line("sva {")
            for raw_line in sva.text.strip().splitlines():
                self.line("    " + raw_line.strip())
            self.line("}")

    def cluster(self, cluster: ast.ClusterDecl) -> None:
        header = f"{cluster.name} {{" if ast.element_kind(cluster.name) == "cluster" else f"cluster {cluster.name} {{"
        self.block(header, lambda: self.cluster_body(cluster))

    # -- build commands --------------------------------------------------

    def build_stmts(self, body: tuple[ast.BuildStmt, ...]) -> None:
        for stmt in body:
            if isinstance(stmt, ast.BuildInstance):
                role = f" {stmt.role}" if stmt.role else ""
                if stmt.body:
                    self.block(f"build {stmt.name}{role} {{", lambda s=stmt: self.build_stmts(s.body))
                else:
                    self.line(f"build {stmt.name}{role};")
            elif isinstance(stmt, ast.Join):
                if isinstance(stmt.source, ast.ClusterDecl):
                    self.line("join {")
                    self.indent += 1
                    self.cluster_body(stmt.source)
                    self.indent -= 1
                    self.line(f"}} {stmt.target};")
                else:
                    self.line(f"join {stmt.source} {stmt.target};")
            else:
                raise TypeError(f"unhandled build statement {type(stmt).__name__}")

    def build(self, decl: ast.BuildDecl) -> None:
        role = f" {decl.role}" if decl.role else ""
        self.block(f"build {decl.name}{role} {{", lambda: self.build_stmts(decl.body))


def format_unit(unit: ast.SourceUnit) -> str:
    printer = _Printer()
    first = True
    for cluster in unit.clusters:
        if not first:
            printer.line()
        printer.cluster(cluster)
        first = False
    for build in unit.builds:
        if not first:
            printer.line()
        printer.build(build)
        first = False
    return "\n".join(printer.lines) + "\n"
