"""Recursive-descent parser producing a SourceUnit."""

from __future__ import annotations

import pathlib
import re

from . import ast
from .lexer import Token, tokenize
from .source import CompileError, Diagnostic, DiagnosticSink, Span


class _Parser:
    def __init__(self, tokens: list[Token], text: str, filename: str):
        self.tokens = tokens
        self.text = text
        self.filename = filename
        self.pos = 0
        self.sink = DiagnosticSink()

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind in ("op", "keyword")

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            return self.advance()
        return None

    def expect(self, text: str) -> Token:
        if self.at(text):
            return self.advance()
        tok = self.peek()
        raise CompileError(f"expected {text!r}, found {tok.text!r}", tok.span)

    def expect_ident(self) -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            raise CompileError(f"expected identifier, found {tok.text!r}", tok.span)
        return self.advance()

    # -- expressions ---------------------------------------------------------

    def parse_expr(self) -> ast.Expr:
        return self._logical_or()

    def _binary_chain(self, sub, ops: tuple[str, ...]) -> ast.Expr:
        left = sub()
        while self.peek().kind == "op" and self.peek().text in ops:
            op = self.advance().text
            right = sub()
            left = ast.Binary(span=left.span.merge(right.span), op=op, left=left, right=right)
        return left

    def _logical_or(self) -> ast.Expr:
        return self._binary_chain(self._logical_and, ("||",))

    def _logical_and(self) -> ast.Expr:
        return self._binary_chain(self._bit_or, ("&&",))

    def _bit_or(self) -> ast.Expr:
        return self._binary_chain(self._bit_xor, ("|",))

    def _bit_xor(self) -> ast.Expr:
        return self._binary_chain(self._bit_and, ("^",))

    def _bit_and(self) -> ast.Expr:
        return self._binary_chain(self._equality, ("&",))

    def _equality(self) -> ast.Expr:
        return self._binary_chain(self._relational, ("==", "!="))

    def _relational(self) -> ast.Expr:
        return self._binary_chain(self._shift, ("<", ">", "<=", ">="))

    def _shift(self) -> ast.Expr:
        return self._binary_chain(self._additive, ("<<", ">>"))

    def _additive(self) -> ast.Expr:
        return self._binary_chain(self._unary, ("+", "-"))

    def _unary(self) -> ast.Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("~", "!", "-"):
            self.advance()
            operand = self._unary()
            return ast.Unary(span=tok.span.merge(operand.span), op=tok.text, operand=operand)
        return self._postfix()

    def _postfix(self) -> ast.Expr:
        expr = self._primary()
        while self.at("["):
            self.advance()
            first = self.parse_expr()
            if self.accept(":"):
                lo = self.parse_expr()
                close = self.expect("]")
                expr = ast.PartSelect(span=expr.span.merge(close.span), base=expr, hi=first, lo=lo)
            else:
                close = self.expect("]")
                expr = ast.Index(span=expr.span.merge(close.span), base=expr, index=first)
        return expr

    def _primary(self) -> ast.Expr:
        tok = self.peek()
        if tok.kind == "sized":
            self.advance()
            return ast.Literal(span=tok.span, value=tok.value or 0, declared_width=tok.width)
        if tok.kind == "number":
            self.advance()
            return ast.Literal(span=tok.span, value=tok.value or 0, declared_width=None)
        if tok.kind == "ident":
            self.advance()
            return ast.Ident(span=tok.span, name=tok.text)
        if self.at("("):
            self.advance()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if self.at("{"):
            open_tok = self.advance()
            parts = [self.parse_expr()]
            while self.accept(","):
                parts.append(self.parse_expr())
            close = self.expect("}")
            return ast.Concat(span=open_tok.span.merge(close.span), parts=tuple(parts))
        raise CompileError(f"expected expression, found {tok.text!r}", tok.span)

    # -- cluster elements ----------------------------------------------------

    def parse_signal(self) -> ast.SignalDecl:
        kw = self.expect("signal")
        name = self.expect_ident()
        self.expect("[")
        width_tok = self.peek()
        if width_tok.kind != "number":
            raise CompileError("signal width must be a plain decimal constant", width_tok.span)
        self.advance()
        self.expect("]")
        depth = None
        if self.at("["):
            self.advance()
            depth_tok = self.peek()
            if depth_tok.kind != "number":
                raise CompileError("array depth must be a plain decimal constant", depth_tok.span)
            self.advance()
            self.expect("]")
            depth = depth_tok.value
        semi = self.expect(";")
        width = width_tok.value or 0
        if width < 1:
            raise CompileError("signal width must be >= 1", width_tok.span)
        if depth is not None and depth < 1:
            raise CompileError("array depth must be >= 1", name.span)
        return ast.SignalDecl(name=name.text, width=width, depth=depth, span=kw.span.merge(semi.span))

    def parse_condition(self, name: Token) -> ast.ConditionDecl:
        self.expect("{")
        body = None
        if self.accept("if"):
            self.expect("(")
            body = self.parse_expr()
            self.expect(")")
            self.expect("this")
            self.expect(";")
        close = self.expect("}")
        return ast.ConditionDecl(name=name.text, body=body, span=name.span.merge(close.span))

    def parse_datapath(self, name: Token) -> ast.DatapathDecl:
        self.expect("{")
        assigns: list[ast.Assign] = []
        while not self.at("}"):
            target = self.expect_ident()
            index = None
            if self.at("["):
                self.advance()
                index = self.parse_expr()
                self.expect("]")
            self.expect("=")
            rhs = self.parse_expr()
            semi = self.expect(";")
            assigns.append(ast.Assign(target=target.text, index=index, rhs=rhs, span=target.span.merge(semi.span)))
        close = self.expect("}")
        if not assigns:
            raise CompileError("datapath body must contain at least one assignment", close.span)
        return ast.DatapathDecl(name=name.text, assigns=tuple(assigns), span=name.span.merge(close.span))

    def parse_tr_items(self) -> tuple[ast.TrItem, ...]:
        items: list[ast.TrItem] = []
        while not self.at("}"):
            unique = bool(self.accept("unique"))
            if self.at("@"):
                at_tok = self.advance()
                guard = self.expect_ident()
                self.expect("{")
                inner = self.parse_tr_items()
                close = self.expect("}")
                items.append(ast.TrGuard(span=at_tok.span.merge(close.span), guard=guard.text, unique=unique, items=inner))
                continue
            if unique:
                raise CompileError("`unique` must prefix a guard block", self.peek().span)
            ref = self.expect_ident()
            kind = ast.element_kind(ref.text)
            semi = self.expect(";")
            span = ref.span.merge(semi.span)
            if kind == "datapath":
                items.append(ast.TrApplyDatapath(span=span, name=ref.text))
            elif kind == "condition":
                items.append(ast.TrDriveCondition(span=span, name=ref.text))
            elif kind == "transaction":
                items.append(ast.TrApplyTransaction(span=span, name=ref.text))
            else:
                raise CompileError(f"unknown element-kind prefix in transaction item {ref.text!r}", ref.span)
        return tuple(items)

    def parse_transaction(self, name: Token) -> ast.TransactionDecl:
        self.expect("{")
        items = self.parse_tr_items()
        close = self.expect("}")
        return ast.TransactionDecl(name=name.text, items=items, span=name.span.merge(close.span))

    # -- sequences -------------------------------------------------------------

    def parse_stmts(self) -> tuple[ast.Stmt, ...]:
        stmts: list[ast.Stmt] = []
        while not self.at("}"):
            stmts.append(self.parse_stmt())
        return tuple(stmts)

    def parse_stmt(self) -> ast.Stmt:
        tok = self.peek()
        if self.accept("random"):
            sig = self.expect_ident()
            semi = self.expect(";")
            return ast.Random(span=tok.span.merge(semi.span), signal=sig.text)
        if self.accept("cover"):
            name = self.expect_ident()
            if ast.element_kind(name.text) != "cover":
                raise CompileError(f"coverage point name must start with cp_: {name.text!r}", name.span)
            self.expect("{")
            conds: list[str] = []
            while not self.at("}"):
                ref = self.expect_ident()
                if ast.element_kind(ref.text) != "condition":
                    raise CompileError("cover bodies may only reference conditions (c_*)", ref.span)
                conds.append(ref.text)
                self.expect(";")
            close = self.expect("}")
            return ast.Cover(span=tok.span.merge(close.span), name=name.text, conditions=tuple(conds))
        if self.accept("exit"):
            semi = self.expect(";")
            return ast.Exit(span=tok.span.merge(semi.span))
        if self.at("@"):
            self.advance()
            guard = self.expect_ident()
            if ast.element_kind(guard.text) != "condition":
                raise CompileError("wait guards must name a condition (c_*)", guard.span)
            self.expect("{")
            body = self.parse_stmts()
            close = self.expect("}")
            return ast.WaitGuard(span=tok.span.merge(close.span), condition=guard.text, body=body)
        if self.accept("fork"):
            branches: list[tuple[ast.Stmt, ...]] = []
            while self.at("{"):
                self.advance()
                branches.append(self.parse_stmts())
                self.expect("}")
            if not self.at("join"):
                raise CompileError("expected `join` closing a fork", self.peek().span)
            self.advance()
            semi = self.expect(";")
            if len(branches) < 2:
                raise CompileError("fork needs at least two branches", tok.span)
            return ast.ForkJoin(span=tok.span.merge(semi.span), branches=tuple(branches))
        ref = self.expect_ident()
        semi = self.expect(";")
        span = ref.span.merge(semi.span)
        kind = ast.element_kind(ref.text)
        if kind == "datapath":
            return ast.ApplyDatapath(span=span, name=ref.text)
        if kind == "condition":
            return ast.DriveCondition(span=span, name=ref.text)
        if kind == "transaction":
            return ast.ApplyTransaction(span=span, name=ref.text)
        if kind == "vtr":
            return ast.CallVtr(span=span, name=ref.text)
        if kind is None:
            return ast.Goto(span=span, state=ref.text)
        raise CompileError(f"unexpected {kind} reference {ref.text!r} in sequence body", ref.span)

    def parse_vtr(self, name: Token) -> ast.VtrDecl:
        self.expect("{")
        seq_kw = self.expect("sequence")
        seq_name = self.expect_ident()
        self.expect("{")
        states: list[ast.SeqState] = []
        while not self.at("}"):
            st_name = self.expect_ident()
            self.expect(":")
            self.expect("{")
            body = self.parse_stmts()
            close = self.expect("}")
            states.append(ast.SeqState(name=st_name.text, body=body, span=st_name.span.merge(close.span)))
        seq_close = self.expect("}")
        close = self.expect("}")
        if not states:
            raise CompileError("sequence must declare at least the init state", seq_close.span)
        if states[0].name != "init":
            self.sink.error("the first sequence state must be named init", states[0].span)
        for st in states[1:]:
            if st.name == "init":
                self.sink.error("duplicate init state", st.span)
        seq = ast.SequenceDecl(name=seq_name.text, states=tuple(states), span=seq_kw.span.merge(seq_close.span))
        return ast.VtrDecl(name=name.text, sequence=seq, span=name.span.merge(close.span))

    def parse_sva_block(self, kw: Token) -> ast.SvaBlock:
        open_tok = self.expect("{")
        depth = 1
        while depth > 0:
            tok = self.advance()
            if tok.kind == "eof":
                raise CompileError("unterminated sva block", kw.span)
            if tok.text == "{":
                depth += 1
            elif tok.text == "}":
                depth -= 1
        close = self.tokens[self.pos - 1]
        raw = self.text[open_tok.span.end : close.span.start]
        body = Span(
            open_tok.span.end,
            close.span.start,
            open_tok.span.line,
            open_tok.span.col + 1,
            self.filename,
        )
        return ast.SvaBlock(text=raw, span=kw.span.merge(close.span), body=body)

    def parse_cluster_body(self, name: str, open_span: Span) -> ast.ClusterDecl:
        signals: list[ast.SignalDecl] = []
        conditions: list[ast.ConditionDecl] = []
        datapaths: list[ast.DatapathDecl] = []
        transactions: list[ast.TransactionDecl] = []
        vtrs: list[ast.VtrDecl] = []
        sva_blocks: list[ast.SvaBlock] = []
        seen: dict[str, Span] = {}
        while not self.at("}"):
            if self.at("signal"):
                sig = self.parse_signal()
                self._check_unique(seen, sig.name, sig.span)
                signals.append(sig)
                continue
            if self.at("sva"):
                kw = self.advance()
                sva_blocks.append(self.parse_sva_block(kw))
                continue
            elem = self.expect_ident()
            kind = ast.element_kind(elem.text)
            if kind == "condition":
                decl = self.parse_condition(elem)
                self._check_unique(seen, decl.name, decl.span)
                conditions.append(decl)
            elif kind == "datapath":
                dp = self.parse_datapath(elem)
                self._check_unique(seen, dp.name, dp.span)
                datapaths.append(dp)
            elif kind == "transaction":
                tr = self.parse_transaction(elem)
                self._check_unique(seen, tr.name, tr.span)
                transactions.append(tr)
            elif kind == "vtr":
                vtr = self.parse_vtr(elem)
                self._check_unique(seen, vtr.name, vtr.span)
                vtrs.append(vtr)
            else:
                raise CompileError(
                    f"unknown element-kind prefix {elem.text!r} (expected c_, d_, tr_, vtr_, signal, or sva)",
                    elem.span,
                )
        close = self.expect("}")
        return ast.ClusterDecl(
            name=name,
            signals=tuple(signals),
            conditions=tuple(conditions),
            datapaths=tuple(datapaths),
            transactions=tuple(transactions),
            vtrs=tuple(vtrs),
            sva_blocks=tuple(sva_blocks),
            span=open_span.merge(close.span),
        )

    def _check_unique(self, seen: dict[str, Span], name: str, span: Span) -> None:
        if name in seen:
            self.sink.error(f"duplicate element name {name!r} in cluster", span)
        seen[name] = span

    # -- build commands -----------------------------------------------------

    def parse_build_stmts(self) -> tuple[ast.BuildStmt, ...]:
        stmts: list[ast.BuildStmt] = []
        while not self.at("}"):
            if self.at("build"):
                kw = self.advance()
                name = self.expect_ident()
                role = ""
                nxt = self.peek()
                if nxt.kind == "ident" and not self.at("{"):
                    role = self.advance().text
                if self.at("{"):
                    self.advance()
                    body = self.parse_build_stmts()
                    close = self.expect("}")
                    stmts.append(ast.BuildInstance(span=kw.span.merge(close.span), name=name.text, role=role, body=body))
                else:
                    semi = self.expect(";")
                    stmts.append(ast.BuildInstance(span=kw.span.merge(semi.span), name=name.text, role=role, body=()))
                continue
            if self.at("join"):
                kw = self.advance()
                source: str | ast.ClusterDecl
                if self.at("{"):
                    open_tok = self.advance()
                    source = self.parse_cluster_body(name="", open_span=open_tok.span)
                else:
                    source = self.expect_ident().text
                target = self.expect_ident()
                semi = self.expect(";")
                stmts.append(ast.Join(span=kw.span.merge(semi.span), source=source, target=target.text))
                continue
            tok = self.peek()
            raise CompileError(f"expected build or join, found {tok.text!r}", tok.span)
        return tuple(stmts)

    # -- top level ------------------------------------------------------------

    def parse_unit(self) -> ast.SourceUnit:
        clusters: list[ast.ClusterDecl] = []
        builds: list[ast.BuildDecl] = []
        names: dict[str, Span] = {}
        while self.peek().kind != "eof":
            if self.at("cluster"):
                kw = self.advance()
                name = self.expect_ident()
                self.expect("{")
                cluster = self.parse_cluster_body(name.text, kw.span)
                if cluster.name in names:
                    self.sink.error(f"duplicate cluster name {cluster.name!r}", name.span)
                names[cluster.name] = name.span
                clusters.append(cluster)
                continue
            if self.at("build"):
                kw = self.advance()
                name = self.expect_ident()
                role = ""
                if self.peek().kind == "ident":
                    role = self.advance().text
                self.expect("{")
                body = self.parse_build_stmts()
                close = self.expect("}")
                builds.append(ast.BuildDecl(name=name.text, role=role, body=body, span=kw.span.merge(close.span)))
                continue
            tok = self.peek()
            if tok.kind == "ident" and ast.element_kind(tok.text) == "cluster":
                self.advance()
                self.expect("{")
                cluster = self.parse_cluster_body(tok.text, tok.span)
                if cluster.name in names:
                    self.sink.error(f"duplicate cluster name {cluster.name!r}", tok.span)
                names[cluster.name] = tok.span
                clusters.append(cluster)
                continue
            raise CompileError(
                f"expected a cluster (cl_* or `cluster name`) or build command, found {tok.text!r}",
                tok.span,
            )
        self.sink.raise_if_errors()
        return ast.SourceUnit(clusters=tuple(clusters), builds=tuple(builds), filename=self.filename)


def parse(text: str, filename: str = "<input>") -> ast.SourceUnit:
    """Parse source text into a SourceUnit, raising CompileError on problems."""
    tokens = tokenize(text, filename)
    return _Parser(tokens, text, filename).parse_unit()


def _sva_file_unit(text: str, filename: str) -> ast.SourceUnit:
    """Wrap a standalone .sva file as a cluster holding one sva block."""
    stem = re.sub(r"\W", "_", pathlib.Path(filename).stem)
    span = Span(0, len(text), 1, 1, filename)
    block = ast.SvaBlock(text=text, span=span, body=span)
    cluster = ast.ClusterDecl(name=f"cl_sva_{stem}", sva_blocks=(block,), span=span)
    return ast.SourceUnit(clusters=(cluster,), filename=filename)


def parse_files(paths) -> ast.SourceUnit:
    """Parse and concatenate several source files into one unit.

    Files ending in `.sva` hold bare assertion directives; each becomes a
    cluster carrying one sva block for the bridge to lower.
    """
    clusters: list[ast.ClusterDecl] = []
    builds: list[ast.BuildDecl] = []
    names: dict[str, str] = {}
    diagnostics: list[Diagnostic] = []
    for path in paths:
        text = path.read_text(encoding="utf-8") if hasattr(path, "read_text") else open(path, encoding="utf-8").read()
        if str(path).endswith(".sva"):
            unit = _sva_file_unit(text, str(path))
        else:
            unit = parse(text, filename=str(path))
        for cluster in unit.clusters:
            if cluster.name in names:
                diagnostics.append(
                    Diagnostic("error", f"cluster {cluster.name!r} already declared in {names[cluster.name]}", cluster.span)
                )
            names[cluster.name] = str(path)
            clusters.append(cluster)
        builds.extend(unit.builds)
    if diagnostics:
        raise CompileError(diagnostics)
    filename = ", ".join(str(p) for p in paths) if paths else "<input>"
    return ast.SourceUnit(clusters=tuple(clusters), builds=tuple(builds), filename=filename)
