"""Lossless-enough lexer for Python 3 source.

Produces the flat token stream the rest of the pipeline consumes: NAME,
NUMBER, STRING, OPERATOR, KEYWORD plus structural NEWLINE / INDENT /
DEDENT / ENDMARKER (and COMMENT when requested).  f-strings are opaque
STRING lexemes; no expression structure is recovered here.
"""

from __future__ import annotations

import enum
import io
import re
from dataclasses import dataclass


class TokenKind(enum.Enum):
    NAME = "NAME"
    NUMBER = "NUMBER"
    STRING = "STRING"
    OPERATOR = "OPERATOR"
    KEYWORD = "KEYWORD"
    NEWLINE = "NEWLINE"
    INDENT = "INDENT"
    DEDENT = "DEDENT"
    COMMENT = "COMMENT"
    ENDMARKER = "ENDMARKER"


@dataclass(frozen=True)
class SourceToken:
    kind: TokenKind
    text: str  # verbatim lexeme; NEWLINE is canonical "\n", INDENT/DEDENT/ENDMARKER empty
    line: int  # 1-based physical line
    col: int  # 0-based column

    def __repr__(self) -> str:
        return f"SourceToken({self.kind.value}, {self.text!r}, {self.line}:{self.col})"


class LexError(ValueError):
    """Base for lexer failures; carries the offending position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, col {col}")
        self.line = line
        self.col = col


class UnterminatedString(LexError):
    pass


class InconsistentIndentation(LexError):
    pass


class InvalidCharacter(LexError):
    pass


class UnbalancedIndent(ValueError):
    """Raised by detokenize when INDENT/DEDENT tokens do not balance."""


# Frozen Python 3 keyword list; soft keywords (match, case) stay NAMEs.
KEYWORDS = frozenset(
    """False None True and as assert async await break class continue def del
    elif else except finally for from global if import in is lambda nonlocal
    not or pass raise return try while with yield""".split()
)

# Operators and delimiters, matched longest-first.
_OPERATORS = [
    "**=", "//=", ">>=", "<<=", "...", "!=", ">=", "<=", "==", "->", ":=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "**", "//", "<<",
    ">>", "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "(",
    ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
]
_OP_RE = re.compile("|".join(re.escape(op) for op in _OPERATORS))

_NAME_RE = re.compile(r"[^\W\d]\w*", re.UNICODE)

# Number forms follow the Python 3 grammar (underscores included).
_EXPONENT = r"[eE][-+]?[0-9](?:_?[0-9])*"
_POINT_FLOAT = rf"(?:[0-9](?:_?[0-9])*\.(?:[0-9](?:_?[0-9])*)?|\.[0-9](?:_?[0-9])*)(?:{_EXPONENT})?"
_EXP_FLOAT = rf"[0-9](?:_?[0-9])*{_EXPONENT}"
_FLOAT = rf"(?:{_POINT_FLOAT}|{_EXP_FLOAT})"
_INT = (
    r"(?:0[xX](?:_?[0-9a-fA-F])+|0[bB](?:_?[01])+|0[oO](?:_?[0-7])+"
    r"|0(?:_?0)*|[1-9](?:_?[0-9])*)"
)
_NUMBER_RE = re.compile(rf"(?:{_FLOAT}|{_INT})[jJ]?")

_STRING_PREFIXES = frozenset(
    ["", "r", "b", "u", "f", "rb", "br", "rf", "fr"]
)
_STRING_START_RE = re.compile(r"([A-Za-z]{0,2})('''|\"\"\"|'|\")")

_OPEN_BRACKETS = {"(", "[", "{"}
_CLOSE_BRACKETS = {")", "]", "}"}

_TABSIZE = 8


def _indent_widths(ws: str) -> tuple[int, int]:
    """Column of the first code char under tabstop-8 and tabstop-1 rules.

    Comparing both widths detects tab/space mixtures whose relative depth
    is ambiguous, the same trick CPython uses.
    """
    col8 = col1 = 0
    for ch in ws:
        if ch == "\t":
            col8 = (col8 // _TABSIZE + 1) * _TABSIZE
            col1 += 1
        elif ch == "\f":
            col8 = col1 = 0
        else:
            col8 += 1
            col1 += 1
    return col8, col1


class _Scanner:
    """Single-pass scanner over the normalized source text."""

    def __init__(self, text: str, keep_comments: bool):
        self.text = text
        self.keep = keep_comments
        self.n = len(text)
        self.i = 0
        self.line = 1
        self.line_start = 0
        self.tokens: list[SourceToken] = []
        self.indents: list[tuple[int, int]] = [(0, 0)]
        self.bracket_depth = 0
        self.line_has_code = False  # tokens emitted on current logical line

    def col(self) -> int:
        return self.i - self.line_start

    def error(self, cls, message: str) -> LexError:
        return cls(message, self.line, self.col())

    def emit(self, kind: TokenKind, text: str, line: int, col: int) -> None:
        self.tokens.append(SourceToken(kind, text, line, col))

    def newline_char(self) -> None:
        self.i += 1
        self.line += 1
        self.line_start = self.i

    def run(self) -> list[SourceToken]:
        while self.i < self.n:
            if not self.line_has_code and self.bracket_depth == 0:
                if not self.start_of_line():
                    continue
            if not self.scan_one():
                continue
        self.finish()
        return self.tokens

    def start_of_line(self) -> bool:
        """Handle indentation; returns False if the line held no code."""
        ws_start = self.i
        while self.i < self.n and self.text[self.i] in " \t\f":
            self.i += 1
        if self.i >= self.n:
            return False
        ch = self.text[self.i]
        if ch == "\n":
            self.newline_char()
            return False
        if ch == "#":
            self.scan_comment()
            if self.i < self.n and self.text[self.i] == "\n":
                self.newline_char()
            return False
        if ch == "\\" and self.i + 1 < self.n and self.text[self.i + 1] == "\n":
            # Continuation of an empty line: treat as blank.
            self.i += 2
            self.line += 1
            self.line_start = self.i
            return False
        self.apply_indent(self.text[ws_start : self.i])
        return True

    def apply_indent(self, ws: str) -> None:
        col8, col1 = _indent_widths(ws)
        top8, top1 = self.indents[-1]
        if col8 > top8:
            if col1 <= top1:
                raise self.error(InconsistentIndentation, "ambiguous tab/space indent")
            self.indents.append((col8, col1))
            self.emit(TokenKind.INDENT, "", self.line, 0)
            return
        while col8 < self.indents[-1][0]:
            self.indents.pop()
            self.emit(TokenKind.DEDENT, "", self.line, 0)
        top8, top1 = self.indents[-1]
        if col8 != top8 or col1 != top1:
            raise self.error(InconsistentIndentation, "dedent to an unseen indentation level")

    def scan_one(self) -> bool:
        ch = self.text[self.i]
        if ch in " \t\f":
            self.i += 1
            return False
        if ch == "\\" and self.i + 1 < self.n and self.text[self.i + 1] == "\n":
            self.i += 2
            self.line += 1
            self.line_start = self.i
            return False
        if ch == "\n":
            if self.bracket_depth > 0:
                self.newline_char()
                return False
            self.emit(TokenKind.NEWLINE, "\n", self.line, self.col())
            self.newline_char()
            self.line_has_code = False
            return True
        if ch == "#":
            self.scan_comment()
            return True
        start_line, start_col = self.line, self.col()
        m = _STRING_START_RE.match(self.text, self.i)
        if m and m.group(1).lower() in _STRING_PREFIXES:
            self.scan_string(m.group(2), m.end(), start_line, start_col)
            self.line_has_code = True
            return True
        m = _NUMBER_RE.match(self.text, self.i)
        if m:
            self.emit(TokenKind.NUMBER, m.group(), start_line, start_col)
            self.i = m.end()
            self.line_has_code = True
            return True
        m = _NAME_RE.match(self.text, self.i)
        if m:
            kind = TokenKind.KEYWORD if m.group() in KEYWORDS else TokenKind.NAME
            self.emit(kind, m.group(), start_line, start_col)
            self.i = m.end()
            self.line_has_code = True
            return True
        m = _OP_RE.match(self.text, self.i)
        if m:
            op = m.group()
            if op in _OPEN_BRACKETS:
                self.bracket_depth += 1
            elif op in _CLOSE_BRACKETS:
                self.bracket_depth = max(0, self.bracket_depth - 1)
            self.emit(TokenKind.OPERATOR, op, start_line, start_col)
            self.i = m.end()
            self.line_has_code = True
            return True
        raise self.error(InvalidCharacter, f"invalid character {ch!r}")

    def scan_comment(self) -> None:
        start_line, start_col = self.line, self.col()
        end = self.text.find("\n", self.i)
        if end == -1:
            end = self.n
        if self.keep:
            self.emit(TokenKind.COMMENT, self.text[self.i : end], start_line, start_col)
        self.i = end

    def scan_string(self, quote: str, body_start: int, start_line: int, start_col: int) -> None:
        start = self.i
        self.i = body_start  # past prefix letters and the opening quote
        triple = len(quote) == 3
        while self.i < self.n:
            ch = self.text[self.i]
            if ch == "\\":
                if self.i + 1 < self.n and self.text[self.i + 1] == "\n":
                    self.i += 2
                    self.line += 1
                    self.line_start = self.i
                else:
                    self.i += 2
                continue
            if ch == "\n":
                if not triple:
                    raise UnterminatedString("unterminated string", start_line, start_col)
                self.newline_char()
                continue
            if self.text.startswith(quote, self.i):
                self.i += len(quote)
                self.emit(TokenKind.STRING, self.text[start : self.i], start_line, start_col)
                return
            self.i += 1
        raise UnterminatedString("unterminated string", start_line, start_col)

    def finish(self) -> None:
        if self.line_has_code:
            self.emit(TokenKind.NEWLINE, "\n", self.line, self.col())
        while len(self.indents) > 1:
            self.indents.pop()
            self.emit(TokenKind.DEDENT, "", self.line, 0)
        self.emit(TokenKind.ENDMARKER, "", self.line, 0)


def tokenize(source: str, keep_comments: bool = False) -> list[SourceToken]:
    """Lex Python source into a flat token list ending in ENDMARKER."""
    text = source.replace("\r\n", "\n").replace("\r", "\n")
    return _Scanner(text, keep_comments).run()


def tokenize_bytes(data: bytes, keep_comments: bool = False) -> list[SourceToken]:
    """Decode UTF-8 and lex; undecodable bytes raise InvalidCharacter."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidCharacter(f"not valid UTF-8 ({exc.reason})", 0, exc.start) from None
    if text.startswith("﻿"):
        text = text[1:]
    return tokenize(text, keep_comments=keep_comments)


_NO_SPACE_BEFORE = {")", "]", "}", ",", ":", ";"}
_ATOM_KINDS = {TokenKind.NAME, TokenKind.NUMBER, TokenKind.STRING}


def _space_between(prev: SourceToken, tok: SourceToken) -> bool:
    if prev.kind is TokenKind.OPERATOR and prev.text in _OPEN_BRACKETS:
        return False
    if tok.kind is TokenKind.OPERATOR and tok.text in _NO_SPACE_BEFORE:
        return False
    prev_is_atomish = prev.kind in _ATOM_KINDS or (
        prev.kind is TokenKind.OPERATOR and prev.text in _CLOSE_BRACKETS
    )
    if tok.kind is TokenKind.OPERATOR and tok.text in ("(", "["):
        # Call / subscript position binds tightly; "if (x)" keeps its space.
        if prev_is_atomish:
            return False
    if tok.kind is TokenKind.OPERATOR and tok.text == ".":
        # "1 ." keeps the space so the dot cannot fuse into a float.
        if prev.kind is not TokenKind.NUMBER and prev_is_atomish:
            return False
    if prev.kind is TokenKind.OPERATOR and prev.text == ".":
        if tok.kind is TokenKind.NAME:
            return False
    return True


def detokenize(tokens: list[SourceToken]) -> str:
    """Render tokens to canonical source: 4-space indents, deterministic spacing."""
    out = io.StringIO()
    depth = 0
    at_line_start = True
    prev: SourceToken | None = None
    for idx, tok in enumerate(tokens):
        if tok.kind is TokenKind.ENDMARKER:
            continue
        if tok.kind is TokenKind.NEWLINE:
            out.write("\n")
            at_line_start = True
            prev = None
            continue
        if tok.kind is TokenKind.INDENT:
            depth += 1
            continue
        if tok.kind is TokenKind.DEDENT:
            depth -= 1
            if depth < 0:
                raise UnbalancedIndent("DEDENT below depth zero")
            continue
        if at_line_start:
            out.write("    " * depth)
            at_line_start = False
        elif prev is not None and _space_between(prev, tok):
            out.write(" ")
        out.write(tok.text)
        prev = tok
        if tok.kind is TokenKind.COMMENT:
            # A comment owns the rest of its line; break unless a NEWLINE follows.
            nxt = tokens[idx + 1] if idx + 1 < len(tokens) else None
            if nxt is None or nxt.kind is not TokenKind.NEWLINE:
                out.write("\n")
                at_line_start = True
                prev = None
    if depth != 0:
        raise UnbalancedIndent(f"unclosed INDENT depth {depth} at end of stream")
    text = out.getvalue()
    if text and not text.endswith("\n"):
        text += "\n"
    return text


_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\\\": "\\", "\\t": "\t", "\\n": "\n", "\\r": "\r"}
_UNESCAPE_RE = re.compile(r"\\[\\tnr]")


def escape_text(text: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def unescape_text(text: str) -> str:
    return _UNESCAPE_RE.sub(lambda m: _UNESCAPES[m.group()], text)


def format_tokens(tokens: list[SourceToken]) -> str:
    """Serialize one token per line: kind, escaped text, line, col."""
    lines = []
    for tok in tokens:
        lines.append(f"{tok.kind.value}\t{escape_text(tok.text)}\t{tok.line}\t{tok.col}")
    return "\n".join(lines) + "\n"


def parse_tokens(text: str) -> list[SourceToken]:
    """Inverse of format_tokens."""
    tokens = []
    for raw in text.splitlines():
        if not raw:
            continue
        kind, tok_text, line, col = raw.split("\t")
        tokens.append(SourceToken(TokenKind(kind), unescape_text(tok_text), int(line), int(col)))
    return tokens


def write_tokens(tokens: list[SourceToken], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_tokens(tokens))


def read_tokens(path) -> list[SourceToken]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_tokens(fh.read())
