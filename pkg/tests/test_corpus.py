"""Tests for vocabulary, splits, encoding, and batch streams."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sourcelm.corpus import (
    BatchStream,
    EmptyCorpus,
    EncodedFile,
    TooFewProjects,
    Vocabulary,
    assign_lanes,
    build_vocab,
    encode_file,
    file_terms,
    make_batches,
    read_encoded,
    read_vocab,
    split_projects,
    token_term,
    write_encoded,
    write_vocab,
)
from sourcelm.pylex import TokenKind, tokenize
from sourcelm.pynorm import normalize_source

# --- terms -------------------------------------------------------------


def test_token_term_mapping():
    toks = tokenize("x = 1\n")
    assert [token_term(t) for t in toks] == ["x", "=", "1", "$NEWLINE$", None]
    block = tokenize("if x:\n    y\n")
    terms = [token_term(t) for t in block]
    assert "$INDENT$" in terms and "$DEDENT$" in terms


def test_file_terms_reindexes_intros():
    nf = normalize_source("def load(path):\n    return path\n")
    terms, intro = file_terms(nf)
    # ENDMARKER dropped; positions still point at function1 / arg1
    assert terms[-1] == "$DEDENT$"
    assert {terms[p] for p in intro} == {"function1", "arg1"}


# --- vocabulary ----------------------------------------------------------


def _vocab_from_streams(streams, min_count):
    class _FakeFile:
        def __init__(self, terms):
            from sourcelm.pylex import SourceToken

            self.tokens = [
                SourceToken(TokenKind.NAME, t, 1, 0) for t in terms
            ]
            self.intro_positions = {}

    return build_vocab([_FakeFile(s) for s in streams], min_count=min_count)


def test_min_count_threshold():
    streams = [["bar"] * 5 + ["foo"] * 4]
    vocab = _vocab_from_streams(streams, min_count=5)
    assert "bar" in vocab.term_to_id
    assert "foo" not in vocab.term_to_id
    assert vocab.encode_term("foo") == vocab.oov_id
    assert vocab.counts[vocab.oov_id] == 4  # dropped occurrences counted


def test_specials_always_present():
    vocab = _vocab_from_streams([["a"] * 9], min_count=5)
    assert vocab.oov_id != vocab.num_id
    assert vocab.id_to_term[vocab.num_id] == "$NUM$"
    assert vocab.counts[vocab.num_id] == 0


def test_vocab_dense_frequency_ordered():
    vocab = _vocab_from_streams([["a"] * 9 + ["b"] * 7 + ["c"] * 5], min_count=5)
    assert sorted(vocab.term_to_id.values()) == list(range(len(vocab)))
    counts = vocab.counts
    assert counts == sorted(counts, reverse=True)
    assert vocab.id_to_term[0] == "a"


def test_empty_corpus_raises():
    with pytest.raises(EmptyCorpus):
        build_vocab([], min_count=5)


def test_identifier_flags():
    vocab = Vocabulary(["$OOV$", "$NUM$", "var1", "arg2", "deffoo", "class10"],
                       [0, 0, 0, 0, 0, 0])
    flags = vocab.id_is_identifier()
    assert flags.tolist() == [False, False, True, True, False, True]


def test_vocab_digest_and_roundtrip(tmp_path):
    v1 = _vocab_from_streams([["a"] * 9 + ["b"] * 7], min_count=5)
    v2 = _vocab_from_streams([["a"] * 9 + ["b"] * 7], min_count=5)
    v3 = _vocab_from_streams([["a"] * 9], min_count=5)
    assert v1.digest() == v2.digest()
    assert v1.digest() != v3.digest()
    path = tmp_path / "vocab.tsv"
    write_vocab(v1, path)
    back = read_vocab(path)
    assert back.id_to_term == v1.id_to_term
    assert back.counts == v1.counts
    assert back.digest() == v1.digest()


# --- encoding ---------------------------------------------------------------


def test_encode_decode_inverse():
    src = "def load(path):\n    return path\n" * 1
    nf = normalize_source(src)
    vocab = build_vocab([nf], min_count=1)
    ef = encode_file(nf, vocab)
    terms, _ = file_terms(nf)
    assert [vocab.id_to_term[i] for i in ef.ids] == terms


def test_rare_tokens_become_oov_only():
    nf = normalize_source("x = y + y + y + y + y\n")
    # min_count 5: "y"->var? no: y unbound, stays y with 5 occurrences
    vocab = build_vocab([nf], min_count=5)
    ef = encode_file(nf, vocab)
    terms, _ = file_terms(nf)
    decoded = [vocab.id_to_term[i] for i in ef.ids]
    for orig, dec in zip(terms, decoded):
        assert dec == orig or dec == "$OOV$"


def test_oov_intro_dropped():
    nf = normalize_source("alpha = 1\nbeta = alpha\n")
    vocab = build_vocab([nf], min_count=2)  # var2 occurs once -> OOV
    ef = encode_file(nf, vocab)
    intro_terms = {vocab.id_to_term[ef.ids[p]] for p in ef.intro}
    assert "$OOV$" not in intro_terms


def test_encoded_file_roundtrip(tmp_path):
    ef = EncodedFile(ids=[3, 1, 4, 1, 5], intro={0, 2})
    path = tmp_path / "f.ids"
    write_encoded(ef, path)
    back = read_encoded(path)
    assert back.ids == ef.ids and back.intro == ef.intro


# --- project splits -------------------------------------------------------


def test_split_sizes():
    projects = [f"proj{i}" for i in range(10)]
    split = split_projects(projects, (0.8, 0.1, 0.1), seed=7)
    assert len(split.projects("train")) == 8
    assert len(split.projects("dev")) == 1
    assert len(split.projects("test")) == 1
    assert set(split.assignment) == set(projects)


def test_split_deterministic():
    projects = [f"p{i}" for i in range(17)]
    a = split_projects(projects, seed=3)
    b = split_projects(projects, seed=3)
    c = split_projects(projects, seed=4)
    assert a.assignment == b.assignment
    assert a.assignment != c.assignment


def test_split_too_few():
    with pytest.raises(TooFewProjects):
        split_projects(["a", "b"], (0.8, 0.1, 0.1), seed=0)


def test_split_every_split_nonempty_small():
    split = split_projects(["a", "b", "c"], (0.98, 0.01, 0.01), seed=0)
    for part in ("train", "dev", "test"):
        assert len(split.projects(part)) == 1


def test_split_bad_ratios():
    with pytest.raises(ValueError):
        split_projects(list("abcdef"), (0.5, 0.2, 0.2), seed=0)


# --- lane packing & batch stream ---------------------------------------


def test_assign_lanes_balanced_deterministic():
    lanes = assign_lanes([10, 9, 3, 2, 1], 2)
    totals = [sum([10, 9, 3, 2, 1][i] for i in lane) for lane in lanes]
    assert abs(totals[0] - totals[1]) <= 3
    assert lanes == assign_lanes([10, 9, 3, 2, 1], 2)


def test_single_file_segments():
    ef = EncodedFile(ids=[1, 2, 3, 4, 5, 6, 7], intro=set())
    stream = BatchStream([ef], batch_size=1, unroll=3)
    segs = list(stream)
    assert stream.n_segments == 3 and len(segs) == 3
    assert segs[0].inputs[0].tolist() == [1, 2, 3]
    assert segs[0].targets[0].tolist() == [2, 3, 4]
    assert segs[1].inputs[0].tolist() == [4, 5, 6]
    assert segs[2].inputs[0, 0] == 7
    # reset only at the very first position
    assert segs[0].reset[0].tolist() == [True, False, False]
    assert not segs[1].reset.any() and not segs[2].reset.any()
    # the file's last token has no target; padding is masked too
    assert segs[2].mask[0].tolist() == [False, False, False]
    assert stream.n_predictions == 6


def test_two_files_reset_and_shift():
    f1 = EncodedFile(ids=[1, 2, 3], intro=set())
    f2 = EncodedFile(ids=[4, 5], intro=set())
    stream = BatchStream([f1, f2], batch_size=1, unroll=10)
    seg = next(iter(stream))
    assert seg.inputs[0, :5].tolist() == [1, 2, 3, 4, 5]
    assert seg.reset[0, :5].tolist() == [True, False, False, True, False]
    assert seg.mask[0, :5].tolist() == [True, True, False, True, False]
    assert seg.targets[0, :2].tolist() == [2, 3]
    assert seg.targets[0, 3] == 5


def test_intro_flags_from_normalized_example():
    nf = normalize_source("def load(path):\n    return path\n")
    vocab = build_vocab([nf], min_count=1)
    stream = make_batches([nf], vocab, batch_size=1, unroll=20)
    seg = next(iter(stream))
    terms, intro = file_terms(nf)
    flagged = {terms[p] for p in np.nonzero(seg.intro[0])[0] if p < len(terms)}
    assert flagged == {"function1", "arg1"}
    for p in np.nonzero(seg.intro[0])[0]:
        assert seg.intro_ids[0, p] == seg.inputs[0, p]


def test_more_lanes_than_files():
    ef = EncodedFile(ids=[1, 2], intro=set())
    stream = BatchStream([ef], batch_size=3, unroll=4)
    seg = next(iter(stream))
    assert seg.mask[1].any() == False and seg.mask[2].any() == False


@given(
    st.lists(st.integers(min_value=1, max_value=13), min_size=1, max_size=8),
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=7),
)
@settings(max_examples=120, deadline=None)
def test_stream_reassembles_files(lengths, batch_size, unroll):
    rng = np.random.default_rng(42)
    files = [
        EncodedFile(ids=rng.integers(1, 50, size=n).tolist(), intro=set())
        for n in lengths
    ]
    stream = BatchStream(files, batch_size, unroll)
    # collect per-lane flattened steps
    per_lane_inputs = [[] for _ in range(batch_size)]
    per_lane = {k: [[] for _ in range(batch_size)] for k in ("t", "m", "r")}
    for seg in stream:
        for b in range(batch_size):
            per_lane_inputs[b].extend(seg.inputs[b].tolist())
            per_lane["t"][b].extend(seg.targets[b].tolist())
            per_lane["m"][b].extend(seg.mask[b].tolist())
            per_lane["r"][b].extend(seg.reset[b].tolist())
    total_preds = 0
    for b, lane in enumerate(stream.lanes):
        pos = 0
        for fi in lane:
            ids = files[fi].ids
            got = per_lane_inputs[b][pos : pos + len(ids)]
            assert got == ids  # lane reproduces the file intact
            assert per_lane["r"][b][pos] is True or per_lane["r"][b][pos] == True
            for k in range(len(ids) - 1):  # shifted targets inside the file
                assert per_lane["m"][b][pos + k]
                assert per_lane["t"][b][pos + k] == ids[k + 1]
            if len(ids) > 0:
                assert not per_lane["m"][b][pos + len(ids) - 1]
            pos += len(ids)
        # nothing unmasked beyond lane content
        assert not any(per_lane["m"][b][pos:])
        total_preds += sum(per_lane["m"][b])
    assert total_preds == stream.n_predictions == sum(n - 1 for n in lengths)
