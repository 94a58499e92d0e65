"""Tokenizer and detokenizer behavior, frozen by small goldens plus properties."""

import pytest
from hypothesis import given, settings, strategies as st

from sourcelm import pylex
from sourcelm.pylex import (
    InconsistentIndentation,
    InvalidCharacter,
    SourceToken,
    TokenKind,
    UnbalancedIndent,
    UnterminatedString,
    detokenize,
    format_tokens,
    parse_tokens,
    tokenize,
    tokenize_bytes,
)


def kinds(tokens):
    return [t.kind.value for t in tokens]


def texts(tokens):
    return [t.text for t in tokens if t.kind not in (TokenKind.ENDMARKER,)]


def test_simple_assignment():
    toks = tokenize("x=1\n")
    assert kinds(toks) == ["NAME", "OPERATOR", "NUMBER", "NEWLINE", "ENDMARKER"]
    assert [t.text for t in toks[:3]] == ["x", "=", "1"]
    assert toks[0].line == 1 and toks[0].col == 0
    assert toks[2].col == 2


def test_one_liner_def_has_no_indent():
    toks = tokenize("def f(): pass\n")
    assert kinds(toks) == [
        "KEYWORD", "NAME", "OPERATOR", "OPERATOR", "OPERATOR", "KEYWORD",
        "NEWLINE", "ENDMARKER",
    ]


def test_block_indent_dedent_balance():
    src = "if x:\n    a = 1\n    b = 2\nc = 3\n"
    toks = tokenize(src)
    assert kinds(toks).count("INDENT") == kinds(toks).count("DEDENT") == 1
    # the DEDENT lands before c
    i = [t.text for t in toks].index("c")
    assert toks[i - 1].kind is TokenKind.DEDENT


def test_nested_dedents_at_eof():
    toks = tokenize("def f():\n    if x:\n        y\n")
    assert kinds(toks).count("INDENT") == 2
    assert kinds(toks).count("DEDENT") == 2
    assert toks[-1].kind is TokenKind.ENDMARKER
    assert kinds(toks)[-3:] == ["DEDENT", "DEDENT", "ENDMARKER"]


def test_exactly_one_endmarker():
    for src in ["", "x\n", "\n\n", "# only a comment\n", "if a:\n    b\n"]:
        toks = tokenize(src)
        assert kinds(toks).count("ENDMARKER") == 1
        assert toks[-1].kind is TokenKind.ENDMARKER


def test_missing_trailing_newline_still_emits_newline():
    toks = tokenize("x = 1")
    assert kinds(toks) == ["NAME", "OPERATOR", "NUMBER", "NEWLINE", "ENDMARKER"]


def test_blank_and_comment_lines_produce_no_structure():
    src = "a = 1\n\n   \n# comment line\nb = 2\n"
    toks = tokenize(src)
    assert kinds(toks).count("NEWLINE") == 2
    assert kinds(toks).count("INDENT") == 0
    assert "COMMENT" not in kinds(toks)


def test_keep_comments():
    src = "a = 1  # trailing\n# standalone\nb = 2\n"
    toks = tokenize(src, keep_comments=True)
    comments = [t.text for t in toks if t.kind is TokenKind.COMMENT]
    assert comments == ["# trailing", "# standalone"]
    # trailing comment sits before its NEWLINE
    i = kinds(toks).index("COMMENT")
    assert toks[i + 1].kind is TokenKind.NEWLINE


def test_implicit_continuation_inside_brackets():
    src = "f(a,\n  b)\n"
    toks = tokenize(src)
    assert kinds(toks).count("NEWLINE") == 1
    assert kinds(toks).count("INDENT") == 0


def test_explicit_backslash_continuation():
    src = "x = 1 + \\\n    2\n"
    toks = tokenize(src)
    assert kinds(toks).count("NEWLINE") == 1
    assert texts(toks) == ["x", "=", "1", "+", "2", "\n"]


def test_string_forms():
    src = "a = 'one'\nb = \"two\"\nc = '''tri\nple'''\nd = r'\\raw'\ne = f'{x}'\ng = rb'\\x00'\n"
    toks = tokenize(src)
    strings = [t.text for t in toks if t.kind is TokenKind.STRING]
    assert strings == ["'one'", '"two"', "'''tri\nple'''", "r'\\raw'", "f'{x}'", "rb'\\x00'"]


def test_fstring_is_opaque():
    toks = tokenize("x = f'{a + b:>{w}}'\n")
    assert kinds(toks) == ["NAME", "OPERATOR", "STRING", "NEWLINE", "ENDMARKER"]


def test_number_forms():
    src = "a = 1_000\nb = 0x1F\nc = 0b10\nd = 0o17\ne = 1.5e-3\nf = .5\ng = 2j\nh = 1.\n"
    toks = tokenize(src)
    nums = [t.text for t in toks if t.kind is TokenKind.NUMBER]
    assert nums == ["1_000", "0x1F", "0b10", "0o17", "1.5e-3", ".5", "2j", "1."]


def test_operators_longest_match():
    toks = tokenize("a **= b // c >> d != e ... f := g -> h\n")
    ops = [t.text for t in toks if t.kind is TokenKind.OPERATOR]
    assert ops == ["**=", "//", ">>", "!=", "...", ":=", "->"]


def test_keywords_are_closed_set():
    toks = tokenize("match x:\n    pass\n")
    # match is a soft keyword and stays a NAME
    assert toks[0].kind is TokenKind.NAME
    toks = tokenize("async def f():\n    await g()\n")
    assert toks[0].kind is TokenKind.KEYWORD
    assert toks[1].kind is TokenKind.KEYWORD


def test_unterminated_string_raises():
    with pytest.raises(UnterminatedString):
        tokenize("'abc")
    with pytest.raises(UnterminatedString):
        tokenize("x = 'abc\ny = 2\n")
    with pytest.raises(UnterminatedString):
        tokenize("s = '''never closed\n")


def test_inconsistent_dedent_raises():
    with pytest.raises(InconsistentIndentation):
        tokenize("if x:\n    a\n  b\n")


def test_ambiguous_tab_space_mix_raises():
    with pytest.raises(InconsistentIndentation):
        tokenize("if x:\n\ta\n        b\n")


def test_tab_indent_blocks():
    toks = tokenize("if x:\n\ta\n\tb\n")
    assert kinds(toks).count("INDENT") == 1
    toks = tokenize("if x:\n\tif y:\n\t\tz\n")
    assert kinds(toks).count("INDENT") == 2


def test_invalid_character_raises():
    with pytest.raises(InvalidCharacter):
        tokenize("a $ b\n")
    with pytest.raises(InvalidCharacter):
        tokenize("a ? b\n")


def test_invalid_utf8_raises():
    with pytest.raises(InvalidCharacter):
        tokenize_bytes(b"x = '\xff\xfe'\n")


def test_crlf_normalized():
    assert texts(tokenize("a = 1\r\nb = 2\r\n")) == texts(tokenize("a = 1\nb = 2\n"))


def test_detokenize_golden_assignment():
    assert detokenize(tokenize("x=1")) == "x = 1\n"


def test_detokenize_golden_call():
    assert detokenize(tokenize("f( a ,b )")) == "f(a, b)\n"


def test_detokenize_golden_block():
    src = "def f(x):\n  if x:\n    return x*2\n"
    assert detokenize(tokenize(src)) == "def f(x):\n    if x:\n        return x * 2\n"


def test_detokenize_attribute_chains():
    assert detokenize(tokenize("a.b.c(d[0], e)")) == "a.b.c(d[0], e)\n"


def test_detokenize_number_dot_keeps_space():
    # "1 .real" must not fuse into the float "1."
    out = detokenize(tokenize("x = 1 .real\n"))
    assert out == "x = 1 .real\n"
    assert texts(tokenize(out)) == texts(tokenize("x = 1 .real\n"))


def test_detokenize_idempotent():
    src = "class A:\n    def f(self, n=3):\n        return [self.g(i) for i in range(n)]\n"
    once = detokenize(tokenize(src))
    assert detokenize(tokenize(once)) == once


def test_detokenize_unbalanced_raises():
    with pytest.raises(UnbalancedIndent):
        detokenize([SourceToken(TokenKind.DEDENT, "", 1, 0)])


def test_serialization_roundtrip_escapes():
    src = "s = 'tab\\there'\nt = '''a\nb'''\n"
    toks = tokenize(src)
    assert parse_tokens(format_tokens(toks)) == toks


# --- property tests -------------------------------------------------------

st_name = st.sampled_from(["a", "bb", "value", "x1", "wrap", "if_", "fn"])
st_keyword = st.sampled_from(["if", "return", "not", "in", "for", "del"])
st_number = st.sampled_from(["0", "1", "42", "1.5", "2e3", "0x1f", "3j", ".5"])
st_string = st.sampled_from(["'s'", '"d"', "'''m\nulti'''", "r'\\t'", "f'{q}'", "b'\\x00'"])
st_flat_op = st.sampled_from(["+", "-", "*", "**", "==", "->", ",", ":", ".", "=", ";"])


@st.composite
def st_line_tokens(draw):
    """One line of atoms with brackets balanced before the line ends."""
    n = draw(st.integers(1, 8))
    toks = []
    stack = []
    for _ in range(n):
        choice = draw(st.integers(0, 5))
        if choice == 0:
            toks.append((TokenKind.NAME, draw(st_name)))
        elif choice == 1:
            toks.append((TokenKind.KEYWORD, draw(st_keyword)))
        elif choice == 2:
            toks.append((TokenKind.NUMBER, draw(st_number)))
        elif choice == 3:
            toks.append((TokenKind.STRING, draw(st_string)))
        elif choice == 4:
            toks.append((TokenKind.OPERATOR, draw(st_flat_op)))
        else:
            br = draw(st.sampled_from(["(", "[", "{"]))
            toks.append((TokenKind.OPERATOR, br))
            stack.append({"(": ")", "[": "]", "{": "}"}[br])
            if draw(st.booleans()):
                toks.append((TokenKind.NAME, draw(st_name)))
                toks.append((TokenKind.OPERATOR, stack.pop()))
    while stack:
        toks.append((TokenKind.OPERATOR, stack.pop()))
    return toks


@st.composite
def st_block(draw, depth=0):
    """A suite: lines, occasionally with a nested indented block."""
    items = []
    for _ in range(draw(st.integers(1, 3))):
        line = draw(st_line_tokens())
        items.append(("line", line))
        if depth < 2 and draw(st.integers(0, 3)) == 0:
            items.append(("block", draw(st_block(depth=depth + 1))))
    return items


def flatten_block(items):
    toks = []
    for kind, payload in items:
        if kind == "line":
            toks.extend(SourceToken(k, s, 1, 0) for k, s in payload)
            toks.append(SourceToken(TokenKind.NEWLINE, "\n", 1, 0))
        else:
            toks.append(SourceToken(TokenKind.INDENT, "", 1, 0))
            toks.extend(flatten_block(payload))
            toks.append(SourceToken(TokenKind.DEDENT, "", 1, 0))
    return toks


@given(st_block())
@settings(max_examples=150, deadline=None)
def test_render_lex_fixpoint(items):
    stream = flatten_block(items) + [SourceToken(TokenKind.ENDMARKER, "", 1, 0)]
    rendered = detokenize(stream)
    relexed = tokenize(rendered)
    assert [(t.kind, t.text) for t in relexed] == [(t.kind, t.text) for t in stream]
    # and rendering is a fixpoint
    assert detokenize(relexed) == rendered


@given(st_block(), st.randoms())
@settings(max_examples=80, deadline=None)
def test_token_stream_invariant_under_extra_spaces(items, rnd):
    stream = flatten_block(items) + [SourceToken(TokenKind.ENDMARKER, "", 1, 0)]
    rendered = detokenize(stream)
    padded = []
    for ln in rendered.split("\n"):
        head = ln[: len(ln) - len(ln.lstrip(" "))]
        rest = ln.lstrip(" ")
        padded.append(head + rest.replace(" ", " " * rnd.randint(1, 3)))
    padded_src = "\n".join(padded)
    a = tokenize(rendered)
    b = tokenize(padded_src)
    assert [(t.kind, t.text) for t in a] == [(t.kind, t.text) for t in b]


@given(st_block())
@settings(max_examples=100, deadline=None)
def test_positions_monotonic_and_brackets_balanced(items):
    stream = flatten_block(items) + [SourceToken(TokenKind.ENDMARKER, "", 1, 0)]
    toks = tokenize(detokenize(stream))
    last = (0, -1)
    depth = 0
    for t in toks:
        assert (t.line, t.col) >= last or t.kind in (TokenKind.DEDENT, TokenKind.ENDMARKER)
        if t.kind not in (TokenKind.DEDENT, TokenKind.ENDMARKER):
            last = (t.line, t.col)
        if t.kind is TokenKind.INDENT:
            depth += 1
        elif t.kind is TokenKind.DEDENT:
            depth -= 1
        assert depth >= 0
    assert depth == 0


@given(st.lists(st.sampled_from(["\t", "\n", "\\", "x", " ", "∂"]), max_size=12))
@settings(max_examples=100, deadline=None)
def test_escape_roundtrip(chars):
    text = "".join(chars)
    assert pylex.unescape_text(pylex.escape_text(text)) == text
