"""Hand-rolled lexer for the transaction-level source language.

Comments: // line, /* block */, and (* block *) are all skipped.
Sized literals follow Verilog habits: 7'h13, 3'd5, 8'b0101, 1'b1.
"""

from __future__ import annotations

from dataclasses import dataclass

from .source import CompileError, Span

KEYWORDS = {
    "cluster",
    "signal",
    "sequence",
    "build",
    "join",
    "unique",
    "random",
    "cover",
    "exit",
    "fork",
    "if",
    "this",
    "sva",
    "assert",
    "property",
    "posedge",
}

# Longest first so the scanner never splits a two-char operator.
OPERATORS = [
    "|->",
    "|=>",
    "##",
    "==",
    "!=",
    "&&",
    "||",
    "<<",
    ">>",
    "<=",
    ">=",
    "{",
    "}",
    "(",
    ")",
    "[",
    "]",
    ";",
    ":",
    ",",
    "=",
    "@",
    "&",
    "|",
    "^",
    "~",
    "!",
    "+",
    "-",
    "<",
    ">",
    "*",
    "/",
    "$",
]


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "keyword" | "number" | "sized" | "op" | "eof"
    text: str
    span: Span
    value: int | None = None  # numeric payload for number/sized
    width: int | None = None  # declared width for sized literals


def _is_ident_start(c: str) -> bool:
    return c.isalpha() or c == "_"


def _is_ident_char(c: str) -> bool:
    return c.isalnum() or c == "_"


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    line_start = 0
    n = len(text)

    def span(start: int, end: int, sline: int, scol: int) -> Span:
        return Span(start, end, sline, scol, filename)

    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
            line_start = i
            continue
        if c in " \t\r":
            i += 1
            continue
        col = i - line_start + 1
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("/*", i) or text.startswith("(*", i):
            closer = "*/" if text[i] == "/" else "*)"
            end = text.find(closer, i + 2)
            if end < 0:
                raise CompileError("unterminated block comment", span(i, n, line, col))
            line += text.count("\n", i, end)
            if "\n" in text[i:end]:
                line_start = text.rfind("\n", i, end) + 1
            i = end + 2
            continue
        if _is_ident_start(c):
            start = i
            while i < n and _is_ident_char(text[i]):
                i += 1
            word = text[start:i]
            kind = "keyword" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, span(start, i, line, col)))
            continue
        if c.isdigit():
            start = i
            while i < n and (text[i].isdigit() or text[i] == "_"):
                i += 1
            if i < n and text[i] == "'":
                width = int(text[start:i].replace("_", ""))
                i += 1
                if i >= n or text[i] not in "bdhBDH":
                    raise CompileError("expected base (b/d/h) after width'", span(start, i, line, col))
                base = {"b": 2, "d": 10, "h": 16}[text[i].lower()]
                i += 1
                dstart = i
                while i < n and (text[i].isalnum() or text[i] == "_"):
                    i += 1
                digits = text[dstart:i].replace("_", "")
                if not digits:
                    raise CompileError("missing digits in sized literal", span(start, i, line, col))
                try:
                    value = int(digits, base)
                except ValueError:
                    raise CompileError(f"bad digits for base-{base} literal: {digits!r}", span(start, i, line, col)) from None
                if width <= 0:
                    raise CompileError("literal width must be >= 1", span(start, i, line, col))
                if value >= (1 << width):
                    raise CompileError(f"literal value {value} does not fit in {width} bits", span(start, i, line, col))
                tokens.append(Token("sized", text[start:i], span(start, i, line, col), value=value, width=width))
            else:
                value = int(text[start:i].replace("_", ""))
                tokens.append(Token("number", text[start:i], span(start, i, line, col), value=value))
            continue
        for op in OPERATORS:
            if text.startswith(op, i):
                tokens.append(Token("op", op, span(i, i + len(op), line, col)))
                i += len(op)
                break
        else:
            raise CompileError(f"unexpected character {c!r}", span(i, i + 1, line, col))
    tokens.append(Token("eof", "", span(n, n, line, n - line_start + 1)))
    return tokens
