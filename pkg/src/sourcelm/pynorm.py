"""Scope-aware identifier anonymization over token streams.

Within-file declarations (functions, classes, parameters, assignment
targets, self-attributes) are renamed to anonymous group names such as
function1, class1, arg2, var3, attribute1, consistently at every
occurrence in scope.  Numeric literals collapse to $NUM$ and comments are
dropped.  Imports, dunder names, the method receiver parameter, and any
name that never resolves to a within-file binding stay verbatim.

The analysis is a structural pass over the token stream, not a full
parser; exotic constructs degrade to "untouched" rather than erroring.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .pylex import SourceToken, TokenKind, read_tokens, write_tokens

NUM_TOKEN = "$NUM$"

# group -> anon-name prefix; the prefix doubles as the group's canonical name
GROUPS = ("class", "function", "arg", "var", "attribute")

_COMPOUND = frozenset(["if", "elif", "else", "while", "try", "except", "finally", "for", "with"])
_OPEN = {"(", "[", "{"}
_CLOSE = {")", "]", "}"}


def is_dunder(name: str) -> bool:
    return len(name) > 4 and name.startswith("__") and name.endswith("__")


@dataclass
class Binding:
    original: str
    anon: str
    group: str
    scope_id: int
    def_index: int  # token index of the binding construct
    intro_index: int = -1  # first rewritten occurrence; filled during rewrite


@dataclass
class Scope:
    id: int
    kind: str  # "module" | "class" | "function"
    parent: "Scope | None"
    bindings: dict[str, Binding] = field(default_factory=dict)
    attributes: dict[str, Binding] = field(default_factory=dict)  # class scopes only
    first_param: str | None = None  # methods: receiver name, left verbatim
    is_method: bool = False
    class_scope: "Scope | None" = None  # methods: the class the receiver belongs to
    globals_decl: set[str] = field(default_factory=set)
    nonlocals_decl: set[str] = field(default_factory=set)


@dataclass
class NormalizedFile:
    tokens: list[SourceToken]
    symbols: list[Binding]
    intro_positions: dict[int, Binding]  # token index -> binding introduced there
    anon_names: frozenset[str]


class _Namer:
    """Assigns anon names per group, sequentially or from a seeded RNG."""

    def __init__(self, numbering: str, seed: int):
        if numbering not in ("sequential", "random"):
            raise ValueError(f"unknown numbering mode {numbering!r}")
        self.numbering = numbering
        self.rng = random.Random(seed)
        self.counters = {g: 0 for g in GROUPS}
        self.used: dict[str, set[int]] = {g: set() for g in GROUPS}

    def name(self, group: str) -> str:
        if self.numbering == "sequential":
            self.counters[group] += 1
            return f"{group}{self.counters[group]}"
        while True:
            n = self.rng.randint(1, 10000)
            if n not in self.used[group]:
                self.used[group].add(n)
                return f"{group}{n}"


class _Analyzer:
    """Pass 1: build the scope tree, collect bindings, mark special spans."""

    def __init__(self, tokens: list[SourceToken], namer: _Namer):
        self.toks = tokens
        self.n = len(tokens)
        self.namer = namer
        self.scopes: list[Scope] = []
        self.module = self._new_scope("module", None)
        self.scope_of: list[Scope] = [self.module] * self.n
        self.no_rewrite = [False] * self.n
        self.bindings: list[Binding] = []
        self.decorators: list[str] = []

    def _new_scope(self, kind: str, parent: Scope | None) -> Scope:
        s = Scope(id=len(self.scopes), kind=kind, parent=parent)
        self.scopes.append(s)
        return s

    def run(self) -> "_Analyzer":
        self._suite(self.module, 0, self.n)
        return self

    # --- stream structure ---------------------------------------------

    def _line_end(self, i: int) -> int:
        j = i
        while j < self.n and self.toks[j].kind not in (
            TokenKind.NEWLINE, TokenKind.INDENT, TokenKind.DEDENT, TokenKind.ENDMARKER,
        ):
            j += 1
        if j < self.n and self.toks[j].kind is TokenKind.NEWLINE:
            j += 1
        return j

    def _content_end(self, i: int, j: int) -> int:
        return j - 1 if j > i and self.toks[j - 1].kind is TokenKind.NEWLINE else j

    def _suite(self, scope: Scope, i: int, end: int) -> int:
        pending: Scope | None = None
        while i < end:
            kind = self.toks[i].kind
            if kind is TokenKind.DEDENT or kind is TokenKind.ENDMARKER:
                self.scope_of[i] = scope
                return i + 1
            if kind is TokenKind.NEWLINE or kind is TokenKind.COMMENT:
                self.scope_of[i] = scope
                i += 1
                continue
            if kind is TokenKind.INDENT:
                self.scope_of[i] = scope
                i = self._suite(pending or scope, i + 1, end)
                pending = None
                continue
            j = self._line_end(i)
            for p in range(i, j):
                self.scope_of[p] = scope
            pending = self._line(scope, i, j)
            i = j
        return i

    # --- statements ----------------------------------------------------

    def _line(self, scope: Scope, i: int, j: int) -> Scope | None:
        while i < j and self.toks[i].kind in (TokenKind.COMMENT, TokenKind.NEWLINE):
            i += 1
        if i >= j:
            return None
        t = self.toks[i]
        if t.kind is TokenKind.OPERATOR and t.text == "@":
            self.decorators.extend(
                tok.text for tok in self.toks[i + 1 : self._content_end(i, j)]
                if tok.kind is TokenKind.NAME
            )
            self._scan_expression(scope, i + 1, self._content_end(i, j))
            return None
        decorators = self.decorators
        self.decorators = []
        while i < j and t.kind is TokenKind.KEYWORD and t.text == "async":
            i += 1
            if i >= j:
                return None
            t = self.toks[i]
        if t.kind is TokenKind.KEYWORD:
            kw = t.text
            if kw == "def":
                return self._def(scope, i, j, decorators)
            if kw == "class":
                return self._class(scope, i, j)
            if kw in ("import", "from"):
                for p in range(i, self._content_end(i, j)):
                    self.no_rewrite[p] = True
                return None
            if kw in ("global", "nonlocal"):
                dest = scope.globals_decl if kw == "global" else scope.nonlocals_decl
                for p in range(i + 1, self._content_end(i, j)):
                    if self.toks[p].kind is TokenKind.NAME:
                        dest.add(self.toks[p].text)
                return None
            if kw in _COMPOUND:
                return self._compound(scope, kw, i, j)
            self._simple(scope, i + 1, j)  # return/yield/raise/assert/del/...
            return None
        self._simple(scope, i, j)
        return None

    def _compound(self, scope: Scope, kw: str, i: int, j: int) -> Scope | None:
        jc = self._content_end(i, j)
        colon = self._find_top(":", i + 1, jc)
        if kw == "for":
            in_idx = self._find_top_keyword("in", i + 1, colon)
            if in_idx is not None:
                self._walk_targets(scope, i + 1, in_idx)
        elif kw == "with":
            self._as_targets(scope, i + 1, colon)
        self._scan_expression(scope, i + 1, colon)
        if colon + 1 < jc:
            return self._line(scope, colon + 1, j)
        return None

    def _simple(self, scope: Scope, i: int, j: int) -> None:
        jc = self._content_end(i, j)
        for pi, pj in self._split_top(";", i, jc):
            if pi >= pj:
                continue
            first = self.toks[pi]
            if first.kind is TokenKind.KEYWORD or (
                first.kind is TokenKind.OPERATOR and first.text == "@"
            ):
                self._line(scope, pi, pj)
                continue
            eqs = [p for p in self._find_all_top("=", pi, pj)]
            if eqs:
                region_start = pi
                for eq in eqs:
                    self._walk_targets(scope, region_start, eq)
                    region_start = eq + 1
            self._scan_expression(scope, pi, pj)

    # --- headers ---------------------------------------------------------

    def _def(self, scope: Scope, i: int, j: int, decorators: list[str]) -> Scope | None:
        jc = self._content_end(i, j)
        p = i + 1
        if p < jc and self.toks[p].kind is TokenKind.NAME:
            self._bind(scope, self.toks[p].text, "function", p)
            p += 1
        is_method = scope.kind == "class" and "staticmethod" not in decorators
        fscope = self._new_scope("function", scope)
        fscope.is_method = is_method
        if is_method:
            fscope.class_scope = scope
        if p < jc and self.toks[p].kind is TokenKind.OPERATOR and self.toks[p].text == "(":
            p = self._params(scope, fscope, p, jc)
        colon = self._find_top(":", p, jc)
        self._scan_expression(scope, p, colon)  # return annotation
        if colon + 1 < jc:  # inline body on the header line
            for q in range(colon + 1, j):
                self.scope_of[q] = fscope
            return self._line(fscope, colon + 1, j)
        return fscope

    def _params(self, outer: Scope, fscope: Scope, open_idx: int, jc: int) -> int:
        """Parse a def parameter list; returns the index after the `)`."""
        depth = 0
        expect_param = True
        slot = 0
        in_lambda = False
        zone_start: int | None = None  # default/annotation expression span
        p = open_idx
        while p < jc:
            t = self.toks[p]
            if t.kind is TokenKind.OPERATOR and t.text in _OPEN:
                depth += 1
                p += 1
                continue
            if t.kind is TokenKind.OPERATOR and t.text in _CLOSE:
                depth -= 1
                if depth == 0:
                    if zone_start is not None:
                        self._scan_expression(outer, zone_start, p)
                    return p + 1
                p += 1
                continue
            if depth == 1 and not in_lambda:
                if t.kind is TokenKind.OPERATOR and t.text == ",":
                    if zone_start is not None:
                        self._scan_expression(outer, zone_start, p)
                        zone_start = None
                    expect_param = True
                    p += 1
                    continue
                if t.kind is TokenKind.OPERATOR and t.text in ("=", ":") and zone_start is None:
                    zone_start = p + 1
                    p += 1
                    continue
                if zone_start is None and expect_param:
                    if t.kind is TokenKind.OPERATOR and t.text in ("*", "**", "/"):
                        p += 1
                        continue
                    if t.kind is TokenKind.NAME:
                        slot += 1
                        self.scope_of[p] = fscope
                        if slot == 1 and fscope.is_method:
                            fscope.first_param = t.text
                            self.no_rewrite[p] = True
                        else:
                            self._bind(fscope, t.text, "arg", p)
                        expect_param = False
                        p += 1
                        continue
            if t.kind is TokenKind.KEYWORD and t.text == "lambda":
                in_lambda = True
            elif in_lambda and t.kind is TokenKind.OPERATOR and t.text == ":":
                in_lambda = False
            p += 1
        return p

    def _class(self, scope: Scope, i: int, j: int) -> Scope | None:
        jc = self._content_end(i, j)
        p = i + 1
        if p < jc and self.toks[p].kind is TokenKind.NAME:
            self._bind(scope, self.toks[p].text, "class", p)
            p += 1
        cscope = self._new_scope("class", scope)
        colon = self._find_top(":", p, jc)
        self._scan_expression(scope, p, colon)  # base list
        if colon + 1 < jc:  # inline body on the header line
            for q in range(colon + 1, j):
                self.scope_of[q] = cscope
            return self._line(cscope, colon + 1, j)
        return cscope

    # --- scanning helpers -------------------------------------------------

    def _find_top(self, text: str, i: int, j: int) -> int:
        for p in self._find_all_top(text, i, j):
            return p
        return j

    def _find_all_top(self, text: str, i: int, j: int):
        """Positions of operator `text` at bracket depth 0, outside lambdas.

        A lambda's parameter list (up to its colon) lives at the enclosing
        depth, so its `=` defaults and `:` must not count as top-level.
        """
        depth = 0
        lambdas: list[int] = []  # bracket depths of open lambda headers
        for p in range(i, j):
            t = self.toks[p]
            if t.kind is TokenKind.KEYWORD and t.text == "lambda":
                lambdas.append(depth)
                continue
            if t.kind is not TokenKind.OPERATOR:
                continue
            if t.text in _OPEN:
                depth += 1
            elif t.text in _CLOSE:
                depth -= 1
            elif lambdas and t.text == ":" and depth == lambdas[-1]:
                lambdas.pop()
            elif t.text == text and depth == 0 and not lambdas:
                yield p

    def _split_top(self, text: str, i: int, j: int):
        start = i
        for p in self._find_all_top(text, i, j):
            yield start, p
            start = p + 1
        yield start, j

    def _find_top_keyword(self, text: str, i: int, j: int) -> int | None:
        depth = 0
        for p in range(i, j):
            t = self.toks[p]
            if t.kind is TokenKind.OPERATOR:
                if t.text in _OPEN:
                    depth += 1
                elif t.text in _CLOSE:
                    depth -= 1
            elif t.kind is TokenKind.KEYWORD and t.text == text and depth == 0:
                return p
        return None

    def _as_targets(self, scope: Scope, i: int, j: int) -> None:
        """Bind `with ... as target` names; targets end at , ) or the colon."""
        depth = 0
        p = i
        while p < j:
            t = self.toks[p]
            if t.kind is TokenKind.OPERATOR:
                if t.text in _OPEN:
                    depth += 1
                elif t.text in _CLOSE:
                    depth -= 1
            elif t.kind is TokenKind.KEYWORD and t.text == "as":
                q = p + 1
                d2 = 0
                while q < j:
                    tq = self.toks[q]
                    if tq.kind is TokenKind.OPERATOR:
                        if tq.text in _OPEN:
                            d2 += 1
                        elif tq.text in _CLOSE:
                            if d2 == 0:
                                break
                            d2 -= 1
                        elif tq.text == "," and d2 == 0:
                            break
                    q += 1
                self._walk_targets(scope, p + 1, q)
                p = q
                continue
            p += 1

    def _scan_expression(self, scope: Scope, i: int, j: int) -> None:
        """Mark keyword-argument names and bind comprehension targets."""
        depth = 0
        p = i
        while p < j:
            t = self.toks[p]
            if t.kind is TokenKind.OPERATOR:
                if t.text in _OPEN:
                    depth += 1
                elif t.text in _CLOSE:
                    depth -= 1
                elif t.text == "=" and depth >= 1 and p - 2 >= i:
                    prev, pprev = self.toks[p - 1], self.toks[p - 2]
                    if (
                        prev.kind is TokenKind.NAME
                        and pprev.kind is TokenKind.OPERATOR
                        and pprev.text in ("(", ",")
                    ):
                        self.no_rewrite[p - 1] = True
            elif t.kind is TokenKind.KEYWORD and t.text == "for" and depth >= 1:
                in_idx = self._find_comp_in(p + 1, j)
                if in_idx is not None:
                    self._walk_targets(scope, p + 1, in_idx)
                    p = in_idx
            p += 1

    def _find_comp_in(self, i: int, j: int) -> int | None:
        depth = 0
        for p in range(i, j):
            t = self.toks[p]
            if t.kind is TokenKind.OPERATOR:
                if t.text in _OPEN:
                    depth += 1
                elif t.text in _CLOSE:
                    if depth == 0:
                        return None
                    depth -= 1
            elif t.kind is TokenKind.KEYWORD and t.text == "in" and depth == 0:
                return p
        return None

    def _walk_targets(self, scope: Scope, i: int, j: int) -> None:
        """Bind plain names in an assignment-target region as Variables.

        Name chains (a.b, a[i], f(x)) are references, except the
        receiver.attr = ... form handled by _try_attribute.  A top-level
        colon starts an annotation and ends the region.
        """
        depth = 0
        p = i
        while p < j:
            t = self.toks[p]
            if t.kind is TokenKind.OPERATOR:
                if t.text in _OPEN:
                    depth += 1
                elif t.text in _CLOSE:
                    depth -= 1
                elif t.text == ":" and depth == 0:
                    return
                p += 1
                continue
            if t.kind is TokenKind.NAME:
                nxt = self.toks[p + 1] if p + 1 < j else None
                if nxt is not None and nxt.kind is TokenKind.OPERATOR and nxt.text in (".", "(", "["):
                    if (
                        nxt.text == "."
                        and p + 2 < j
                        and self.toks[p + 2].kind is TokenKind.NAME
                        and self._is_terminator(p + 3, j)
                        and not self._prev_is_trailer(p, i)
                    ):
                        self._try_attribute(scope, p, p + 2)
                        p += 3
                        continue
                    p = self._skip_trailers(p + 1, j)
                    continue
                self._bind(scope, t.text, "var", p)
            p += 1

    def _is_terminator(self, p: int, j: int) -> bool:
        if p >= j:
            return True
        t = self.toks[p]
        return t.kind is TokenKind.OPERATOR and t.text in (",", ")", "]", ":")

    def _prev_is_trailer(self, p: int, i: int) -> bool:
        if p <= i:
            return False
        t = self.toks[p - 1]
        return t.kind is TokenKind.OPERATOR and t.text in (".", ")", "]")

    def _skip_trailers(self, p: int, j: int) -> int:
        while p < j:
            t = self.toks[p]
            if t.kind is TokenKind.OPERATOR and t.text == "." and p + 1 < j and self.toks[p + 1].kind is TokenKind.NAME:
                p += 2
                continue
            if t.kind is TokenKind.OPERATOR and t.text in ("(", "["):
                depth = 1
                p += 1
                while p < j and depth:
                    tq = self.toks[p]
                    if tq.kind is TokenKind.OPERATOR:
                        if tq.text in _OPEN:
                            depth += 1
                        elif tq.text in _CLOSE:
                            depth -= 1
                    p += 1
                continue
            break
        return p

    # --- bindings ----------------------------------------------------------

    def _bind(self, scope: Scope, name: str, group: str, idx: int) -> None:
        if (
            is_dunder(name)
            or name in scope.globals_decl
            or name in scope.nonlocals_decl
            or name in scope.bindings
        ):
            return
        # the anon name is assigned lazily at first rewritten occurrence, so
        # numbering is dense and follows stream order
        b = Binding(name, "", group, scope.id, idx)
        scope.bindings[name] = b
        self.bindings.append(b)

    def _try_attribute(self, scope: Scope, recv_idx: int, attr_idx: int) -> None:
        recv = self.toks[recv_idx].text
        attr = self.toks[attr_idx].text
        if is_dunder(attr):
            return
        s = scope
        while s is not None:
            if s.kind == "function" and s.is_method and s.first_param == recv:
                cls = s.class_scope
                if cls is not None and attr not in cls.attributes:
                    b = Binding(attr, "", "attribute", cls.id, attr_idx)
                    cls.attributes[attr] = b
                    self.bindings.append(b)
                return
            s = s.parent
        return


def analyze_scopes(
    tokens: list[SourceToken], numbering: str = "sequential", seed: int = 0
) -> tuple[list[Scope], list[Binding], _Analyzer]:
    """Scope tree and bindings for a comment-free token stream."""
    an = _Analyzer(tokens, _Namer(numbering, seed)).run()
    return an.scopes, an.bindings, an


def _resolve(an: _Analyzer, scope: Scope, name: str, idx: int) -> Binding | None:
    # the receiver parameter of any enclosing method stays verbatim
    s = scope
    while s is not None:
        if s.kind == "function" and s.first_param == name:
            return None
        s = s.parent
    if name in scope.globals_decl:
        b = an.module.bindings.get(name)
        if b is not None and b.def_index <= idx:
            return b
        return None
    s = scope.parent if name in scope.nonlocals_decl else scope
    while s is not None:
        if s.kind == "class" and s is not scope:
            s = s.parent  # class scopes are invisible to nested scopes
            continue
        b = s.bindings.get(name)
        if b is not None and (s is scope or b.def_index <= idx):
            return b
        s = s.parent
    return None


def _resolve_attribute(an: _Analyzer, i: int) -> Binding | None:
    toks = an.toks
    if i < 2 or toks[i - 2].kind is not TokenKind.NAME:
        return None
    if i >= 3 and toks[i - 3].kind is TokenKind.OPERATOR and toks[i - 3].text in (".", ")", "]"):
        return None
    recv = toks[i - 2].text
    s = an.scope_of[i]
    while s is not None:
        if s.kind == "function" and s.is_method and s.first_param == recv:
            if s.class_scope is not None:
                return s.class_scope.attributes.get(toks[i].text)
            return None
        s = s.parent
    return None


def normalize(
    tokens: list[SourceToken], numbering: str = "sequential", seed: int = 0
) -> NormalizedFile:
    """Anonymize a token stream; comments are dropped first."""
    stream = [t for t in tokens if t.kind is not TokenKind.COMMENT]
    _, bindings, an = analyze_scopes(stream, numbering, seed)
    out: list[SourceToken] = []
    intro: dict[int, Binding] = {}
    for i, tok in enumerate(stream):
        if tok.kind is TokenKind.NUMBER:
            out.append(replace(tok, text=NUM_TOKEN))
            continue
        if tok.kind is TokenKind.NAME and not an.no_rewrite[i] and not is_dunder(tok.text):
            prev = stream[i - 1] if i > 0 else None
            if prev is not None and prev.kind is TokenKind.OPERATOR and prev.text == ".":
                b = _resolve_attribute(an, i)
            else:
                b = _resolve(an, an.scope_of[i], tok.text, i)
            if b is not None:
                if b.intro_index < 0:
                    b.intro_index = i
                    b.anon = an.namer.name(b.group)
                    intro[i] = b
                out.append(replace(tok, text=b.anon))
                continue
        out.append(tok)
    introduced = sorted(
        (b for b in bindings if b.intro_index >= 0), key=lambda b: b.intro_index
    )
    return NormalizedFile(
        tokens=out,
        symbols=introduced,
        intro_positions=intro,
        anon_names=frozenset(b.anon for b in introduced),
    )


def normalize_source(source: str, numbering: str = "sequential", seed: int = 0) -> NormalizedFile:
    from .pylex import tokenize

    return normalize(tokenize(source), numbering=numbering, seed=seed)


def is_identifier_target(token, nfile: NormalizedFile) -> bool:
    """True iff this token text is one of the file's anonymous identifiers."""
    text = token.text if isinstance(token, SourceToken) else token
    return text in nfile.anon_names


def dump_normalized(nfile: NormalizedFile) -> str:
    """Readable dump of a normalized file: token stream, then symbol table."""
    from .pylex import escape_text

    lines = ["= tokens"]
    for t in nfile.tokens:
        lines.append(f"{t.kind.name}\t{escape_text(t.text)}")
    lines.append("= symbols")
    for b in nfile.symbols:
        lines.append(f"{b.anon}\t{b.group}\t{b.scope_id}\t{b.intro_index}")
    return "\n".join(lines) + "\n"


def write_normalized(nfile: NormalizedFile, tok_path, sym_path) -> None:
    write_tokens(nfile.tokens, tok_path)
    with open(sym_path, "w", encoding="utf-8") as fh:
        for b in nfile.symbols:
            fh.write(f"{b.anon}\t{b.group}\t{b.scope_id}\t{b.intro_index}\n")


def read_normalized(tok_path, sym_path) -> NormalizedFile:
    tokens = read_tokens(tok_path)
    symbols: list[Binding] = []
    with open(sym_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            anon, group, scope_id, intro_index = line.split("\t")
            symbols.append(Binding("", anon, group, int(scope_id), -1, int(intro_index)))
    intro = {b.intro_index: b for b in symbols if b.intro_index >= 0}
    return NormalizedFile(
        tokens=tokens,
        symbols=symbols,
        intro_positions=intro,
        anon_names=frozenset(b.anon for b in symbols),
    )
