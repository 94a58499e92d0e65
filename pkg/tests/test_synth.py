"""Planted-corpus generator: structure, bounds, determinism."""

import pytest

from sourcelm import synth
from sourcelm.corpus import build_vocab, encode_file
from sourcelm.pynorm import read_normalized
from sourcelm.synth import SynthSpec


@pytest.fixture(scope="module")
def corpus():
    return synth.generate(SynthSpec(n_files=30, seed=11))


def terms(sf):
    return [t.text for t in sf.nfile.tokens]


class TestSpecValidation:
    def test_defaults_valid(self):
        SynthSpec()

    @pytest.mark.parametrize("kw", [
        dict(d_min=10),            # below the allowed distance floor
        dict(d_min=90, d_max=80),  # inverted bounds
        dict(d_max=300),
        dict(n_files=0),
        dict(reuses=0),
        dict(idents_per_file=9),   # exceeds the 6-element pools
    ])
    def test_bad_specs_rejected(self, kw):
        with pytest.raises(ValueError):
            SynthSpec(**kw)


class TestPlantedStructure:
    def test_intro_windows(self, corpus):
        for sf in corpus:
            toks = terms(sf)
            for p in sf.intro_positions:
                assert toks[p - 2] == synth.INTRO_MARK
                assert toks[p - 1].startswith("k")
                assert toks[p].startswith("var")
                assert toks[p + 1] == toks[p - 1], "key echo after the var"

    def test_reuse_windows(self, corpus):
        for sf in corpus:
            toks = terms(sf)
            for p in sf.reuse_positions:
                assert toks[p - 2] == synth.REUSE_MARK
                assert toks[p - 1].startswith("k")
                assert toks[p].startswith("var")

    def test_reuse_matches_intro_binding(self, corpus):
        for sf in corpus:
            toks = terms(sf)
            binding = {toks[p - 1]: toks[p] for p in sf.intro_positions}
            for p in sf.reuse_positions:
                assert binding[toks[p - 1]] == toks[p]

    def test_every_identifier_reused_n_times(self, corpus):
        spec = SynthSpec(n_files=30, seed=11)
        for sf in corpus:
            toks = terms(sf)
            per_var = {toks[p]: 0 for p in sf.intro_positions}
            for p in sf.reuse_positions:
                per_var[toks[p]] += 1
            assert set(per_var.values()) == {spec.reuses}

    def test_reuse_distances_within_bounds(self, corpus):
        spec = SynthSpec(n_files=30, seed=11)
        for sf in corpus:
            toks = terms(sf)
            last_seen = {}
            planted = set(sf.intro_positions) | set(sf.reuse_positions)
            for i, term in enumerate(toks):
                if not term.startswith("var"):
                    continue
                if i in sf.reuse_positions:
                    d = i - last_seen[term]
                    assert spec.d_min <= d <= spec.d_max
                if i in planted:
                    last_seen[term] = i

    def test_filler_carries_no_planted_terms(self, corpus):
        for sf in corpus:
            toks = terms(sf)
            planted = set()
            for p in sf.intro_positions:
                planted |= {p - 2, p - 1, p, p + 1}
            for p in sf.reuse_positions:
                planted |= {p - 2, p - 1, p}
            for i, term in enumerate(toks):
                if i not in planted:
                    assert term in synth.FILLER


class TestCorpusIntegration:
    def test_intro_positions_match_encoder(self, corpus):
        vocab = build_vocab([sf.nfile for sf in corpus], min_count=1)
        for sf in corpus:
            ef = encode_file(sf.nfile, vocab)
            assert ef.intro == set(sf.intro_positions)

    def test_vars_are_identifier_shaped_keys_are_not(self, corpus):
        vocab = build_vocab([sf.nfile for sf in corpus], min_count=1)
        for term in ("var1", "var6"):
            assert vocab.id_is_identifier()[vocab.encode_term(term)]
        for term in ("k00", "k05", "let", "use"):
            assert not vocab.id_is_identifier()[vocab.encode_term(term)]

    def test_alignment_token_per_id(self, corpus):
        vocab = build_vocab([sf.nfile for sf in corpus], min_count=1)
        for sf in corpus:
            ef = encode_file(sf.nfile, vocab)
            assert len(ef.ids) == len(sf.nfile.tokens)


class TestDeterminismAndIO:
    def test_same_seed_same_corpus(self):
        a = synth.generate(SynthSpec(n_files=5, seed=3))
        b = synth.generate(SynthSpec(n_files=5, seed=3))
        for fa, fb in zip(a, b):
            assert [t.text for t in fa.nfile.tokens] == \
                   [t.text for t in fb.nfile.tokens]
            assert fa.intro_positions == fb.intro_positions
            assert fa.reuse_positions == fb.reuse_positions

    def test_different_seeds_differ(self):
        a = synth.generate(SynthSpec(n_files=3, seed=1))
        b = synth.generate(SynthSpec(n_files=3, seed=2))
        assert any([t.text for t in fa.nfile.tokens]
                   != [t.text for t in fb.nfile.tokens]
                   for fa, fb in zip(a, b))

    def test_write_corpus_bytes_stable(self, tmp_path):
        files = synth.generate(SynthSpec(n_files=4, seed=5))
        d1, d2 = tmp_path / "a", tmp_path / "b"
        p1 = synth.write_corpus(files, d1)
        p2 = synth.write_corpus(files, d2)
        assert len(p1) == len(p2) == 4
        for (t1, s1), (t2, s2) in zip(p1, p2):
            assert open(t1, "rb").read() == open(t2, "rb").read()
            assert open(s1, "rb").read() == open(s2, "rb").read()

    def test_write_read_roundtrip(self, tmp_path):
        files = synth.generate(SynthSpec(n_files=2, seed=7))
        paths = synth.write_corpus(files, tmp_path)
        for sf, (tok, sym) in zip(files, paths):
            back = read_normalized(tok, sym)
            assert [t.text for t in back.tokens] == terms(sf)
            assert set(back.intro_positions) == set(sf.intro_positions)

    def test_binding_shuffles_across_files(self, corpus):
        bindings = set()
        for sf in corpus:
            toks = terms(sf)
            bindings.add(tuple(sorted(
                (toks[p - 1], toks[p]) for p in sf.intro_positions)))
        assert len(bindings) > 1, "key-to-identifier binding must vary"
