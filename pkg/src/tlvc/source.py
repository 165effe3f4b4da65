"""Source text handling: spans, diagnostics, and the compile error type."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Span:
    """Half-open byte range into a source file, with 1-based line/column.

    Invariants: 0 <= start <= end <= len(text); line >= 1; col >= 1.
    """

    start: int = 0
    end: int = 0
    line: int = 1
    col: int = 1
    filename: str = "<input>"

    def merge(self, other: "Span") -> "Span":
        if other.start < self.start:
            return other.merge(self)
        return Span(self.start, max(self.end, other.end), self.line, self.col, self.filename)

    def __str__(self) -> str:
        return f"{self.filename}:{self.line}:{self.col}"


NO_SPAN = Span()


@dataclass(frozen=True)
class Diagnostic:
    """A single compile-time problem, pointing into the original text."""

    severity: str  # "error" | "warning"
    message: str
    span: Span = NO_SPAN

    def __str__(self) -> str:
        if self.span == NO_SPAN:
            return f"{self.severity}: {self.message}"
        return f"{self.span}: {self.severity}: {self.message}"


class CompileError(Exception):
    """Raised when a front-end or elaboration stage cannot continue."""

    def __init__(self, diagnostics: list[Diagnostic] | Diagnostic | str, span: Span = NO_SPAN):
        if isinstance(diagnostics, str):
            diagnostics = [Diagnostic("error", diagnostics, span)]
        elif isinstance(diagnostics, Diagnostic):
            diagnostics = [diagnostics]
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class DiagnosticSink:
    """Collects diagnostics during a pass; raises at the end if any error."""

    diagnostics: list[Diagnostic] = field(default_factory=list)

    def error(self, message: str, span: Span = NO_SPAN) -> None:
        self.diagnostics.append(Diagnostic("error", message, span))

    def warning(self, message: str, span: Span = NO_SPAN) -> None:
        self.diagnostics.append(Diagnostic("warning", message, span))

    @property
    def has_errors(self) -> bool:
        return any(d.severity == "error" for d in self.diagnostics)

    def raise_if_errors(self) -> None:
        if self.has_errors:
            raise CompileError([d for d in self.diagnostics if d.severity == "error"])
