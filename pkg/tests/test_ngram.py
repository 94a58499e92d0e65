"""Modified Kneser-Ney model versus the brute-force oracle."""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mkn_oracle as oracle
import toy_corpus
from sourcelm import ngram


def quiet_train(files, n, vocab_size):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ngram.DegenerateCounts)
        return ngram.train_mkn(files, n, vocab_size=vocab_size)


# Hand-derived on paper for "a b a b a" (a=0, b=1, |V|=2, bigram):
# raw bigrams (a,b):2 (b,a):2 give n2=2 and nothing else, so D1 falls
# back to 0.75 and D2 = 2 clamps to 1.0; continuation unigrams are
# (a):1 (b):1 with D1 = 1.0. Unigram mass is fully discounted, leaving
# the uniform floor: p1 = 0.5 each. Top level: kept (2-1)/2 = 0.5,
# gamma = 1.0*1/2 = 0.5, so p(b|a) = 0.5 + 0.5*0.5 = 0.75.
ABABA = [[0, 1, 0, 1, 0]]


class TestHandDerived:
    def test_ababa_bigram_literals(self):
        model = quiet_train(ABABA, 2, 2)
        assert math.exp(ngram.ngram_logprob(model, (0,), 1)) == pytest.approx(0.75, abs=1e-15)
        assert math.exp(ngram.ngram_logprob(model, (1,), 0)) == pytest.approx(0.75, abs=1e-15)
        assert math.exp(ngram.ngram_logprob(model, (0,), 0)) == pytest.approx(0.25, abs=1e-15)
        assert math.exp(ngram.ngram_logprob(model, (), 0)) == pytest.approx(0.5, abs=1e-15)

    def test_ababa_discounts(self):
        model = quiet_train(ABABA, 2, 2)
        assert model.discounts[0] == ngram.Discounts(1.0, 0.75, 0.75)
        assert model.discounts[1] == ngram.Discounts(0.75, 1.0, 0.75)
        assert model.counts_of_counts[0] == (2, 0, 0, 0)
        assert model.counts_of_counts[1] == (0, 2, 0, 0)

    def test_ababa_matches_oracle_everywhere(self):
        for n in (2, 3):
            model = quiet_train(ABABA, n, 2)
            contexts = [()]
            contexts += [(a,) for a in range(2)]
            if n >= 3:
                contexts += [(a, b) for a in range(2) for b in range(2)]
            for ctx in contexts:
                for tok in range(2):
                    got = math.exp(ngram.ngram_logprob(model, ctx, tok))
                    want = oracle.prob(ABABA, 2, n, ctx, tok)
                    assert got == pytest.approx(want, rel=1e-12), (n, ctx, tok)

    def test_single_token_type_is_certain(self):
        files = [[0, 0, 0, 0]]
        for n in (2, 3, 4):
            model = quiet_train(files, n, 1)
            got = math.exp(ngram.ngram_logprob(model, (0,), 0))
            want = oracle.prob(files, 1, n, (0,), 0)
            assert abs(got - want) < 1e-12
            assert got == pytest.approx(1.0, abs=1e-12)

    def test_single_type_with_spare_vocab_slot(self):
        # V=2 with one symbol never seen: by hand p(a|a) = 0.875.
        files = [[0, 0, 0, 0]]
        model = quiet_train(files, 2, 2)
        assert math.exp(ngram.ngram_logprob(model, (0,), 0)) == pytest.approx(0.875, abs=1e-15)
        assert math.exp(ngram.ngram_logprob(model, (0,), 1)) == pytest.approx(0.125, abs=1e-15)


class TestBackoffStructure:
    def test_unseen_context_is_exactly_lower_order(self):
        files = [[0, 1, 2, 0, 1, 2, 0]]
        model = quiet_train(files, 3, 4)
        # id 3 exists in the vocabulary but never in the corpus, so any
        # context mentioning it is unseen at every order that uses it.
        assert np.array_equal(ngram.distribution(model, (3, 3)), ngram.distribution(model, ()))
        assert np.array_equal(ngram.distribution(model, (3, 1)), ngram.distribution(model, (1,)))

    def test_empty_context_is_continuation_unigram(self):
        # "a a a a b": raw frequencies are lopsided (a:4, b:1) but the
        # continuation counts are 2:1, and that is what must be used.
        files = [[0, 0, 0, 0, 1]]
        model = quiet_train(files, 2, 2)
        dist = ngram.distribution(model, ())
        for tok in range(2):
            assert dist[tok] == pytest.approx(oracle.prob(files, 2, 2, (), tok), rel=1e-12)
        # not the raw maximum-likelihood unigram
        assert dist[0] != pytest.approx(0.8, abs=1e-3)

    def test_long_context_truncates(self):
        files, vocab_size, _ = toy_corpus.build()
        model = quiet_train(files, 3, vocab_size)
        ctx = tuple(files[0][:10])
        a = ngram.ngram_logprob(model, ctx, files[0][10])
        b = ngram.ngram_logprob(model, ctx[-2:], files[0][10])
        assert a == b

    def test_logprob_agrees_with_distribution(self):
        files, vocab_size, _ = toy_corpus.build()
        model = quiet_train(files, 4, vocab_size)
        rng = np.random.RandomState(11)
        for _ in range(50):
            k = rng.randint(0, 4)
            ctx = tuple(rng.randint(0, vocab_size, size=k))
            tok = int(rng.randint(0, vocab_size))
            d = ngram.distribution(model, ctx)
            assert math.exp(ngram.ngram_logprob(model, ctx, tok)) == pytest.approx(
                d[tok], rel=1e-9
            )


class TestNormalization:
    def test_hundred_random_contexts_sum_to_one(self):
        files, vocab_size, _ = toy_corpus.build()
        rng = np.random.RandomState(7)
        for n in (3, 6):
            model = quiet_train(files, n, vocab_size)
            for _ in range(100):
                k = rng.randint(0, n)
                ctx = tuple(rng.randint(0, vocab_size, size=k))
                total = ngram.distribution(model, ctx).sum()
                assert abs(total - 1.0) <= 1e-9, (n, ctx)

    def test_every_seen_context_normalizes(self):
        files, vocab_size, _ = toy_corpus.build()
        model = quiet_train(files, 3, vocab_size)
        for table in model.tables:
            for ctx in table:
                total = ngram.distribution(model, ctx).sum()
                assert abs(total - 1.0) <= 1e-9


class TestToyCorpusOracle:
    def test_perplexity_matches_oracle_and_decreases(self):
        files, vocab_size, _ = toy_corpus.build()
        start = time.monotonic()
        pps = []
        for n in range(3, 7):
            model = quiet_train(files, n, vocab_size)
            pp = ngram.perplexity(model, files)
            want = oracle.perplexity(files, vocab_size, n, files)
            assert abs(pp - want) / want <= 1e-9, n
            pps.append(pp)
        elapsed = time.monotonic() - start
        for lo, hi in zip(pps[1:], pps[:-1]):
            assert lo <= hi * (1.0 + 1e-12), pps
        assert elapsed < 10.0

    def test_perplexity_scores_all_but_first_positions(self):
        files, vocab_size, _ = toy_corpus.build()
        model = quiet_train(files, 3, vocab_size)
        total = 0.0
        count = 0
        for ids in files:
            for t in range(1, len(ids)):
                ctx = ids[max(0, t - 2) : t]
                total += ngram.ngram_logprob(model, ctx, ids[t])
                count += 1
        assert count == sum(len(f) - 1 for f in files)
        assert ngram.perplexity(model, files) == pytest.approx(math.exp(-total / count))


class TestDiscountEstimation:
    def test_degenerate_counts_warn_and_fall_back(self):
        with pytest.warns(ngram.DegenerateCounts):
            d = ngram.estimate_discounts({1: 0, 2: 2, 3: 0, 4: 0})
        assert d.d1 == 0.75
        assert d.d3 == 0.75

    def test_all_zero_counts(self):
        with pytest.warns(ngram.DegenerateCounts):
            d = ngram.estimate_discounts({})
        assert d == ngram.Discounts(0.75, 0.75, 0.75)

    def test_clamp_upper_bound(self):
        # n1=0, n2>0 makes Y zero and the raw D2 formula give 2.
        with pytest.warns(ngram.DegenerateCounts):
            d = ngram.estimate_discounts({2: 5})
        assert d.d2 == 1.0

    def test_clamp_lower_bound(self):
        # Heavy n3 relative to n2 pushes the raw D2 formula negative.
        # (The raw D1 value sits in (0, 1) whenever n1 > 0, since
        # 2*Y*n2/n1 = 2*n2/(n1 + 2*n2) < 1; only D2 and D3+ can
        # escape the range.)
        d = ngram.estimate_discounts({1: 100, 2: 1, 3: 100})
        assert d.d2 == 0.0
        assert 0.0 < d.d1 < 1.0

    def test_in_range_counts_unclamped(self):
        d = ngram.estimate_discounts({1: 100, 2: 50, 3: 40, 4: 50})
        assert d.d1 == pytest.approx(0.5)
        assert d.d2 == pytest.approx(0.8)
        assert d.d3 == pytest.approx(0.5)


class TestValidation:
    def test_order_below_two_rejected(self):
        with pytest.raises(ValueError):
            ngram.train_mkn([[0, 1]], 1)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            ngram.train_mkn([], 3)
        with pytest.raises(ValueError):
            ngram.train_mkn([[], []], 3)

    def test_id_outside_vocab_rejected(self):
        with pytest.raises(ValueError):
            ngram.train_mkn([[0, 5]], 2, vocab_size=3)

    def test_default_vocab_size_is_max_id_plus_one(self):
        model = quiet_train([[0, 4, 2]], 2, None)
        assert model.vocab_size == 5


class TestSerialization:
    def test_roundtrip_is_exact(self, tmp_path):
        files, vocab_size, _ = toy_corpus.build()
        model = quiet_train(files, 4, vocab_size)
        path = tmp_path / "toy.mkn"
        ngram.write_model(model, path)
        loaded = ngram.read_model(path)
        assert loaded.order == model.order
        assert loaded.vocab_size == model.vocab_size
        assert loaded.discounts == model.discounts
        assert loaded.counts_of_counts == model.counts_of_counts
        assert loaded.tables == model.tables
        rng = np.random.RandomState(3)
        for _ in range(60):
            k = rng.randint(0, 4)
            ctx = tuple(rng.randint(0, vocab_size, size=k))
            tok = int(rng.randint(0, vocab_size))
            assert ngram.ngram_logprob(loaded, ctx, tok) == ngram.ngram_logprob(model, ctx, tok)

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("hello\n")
        with pytest.raises(ValueError):
            ngram.read_model(path)


@st.composite
def small_corpora(draw):
    vocab_size = draw(st.integers(min_value=1, max_value=6))
    n_files = draw(st.integers(min_value=1, max_value=3))
    files = [
        draw(
            st.lists(
                st.integers(min_value=0, max_value=vocab_size - 1),
                min_size=1,
                max_size=24,
            )
        )
        for _ in range(n_files)
    ]
    return files, vocab_size


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(small_corpora(), st.integers(min_value=2, max_value=4), st.randoms())
    def test_random_corpora_match_oracle(self, corpus_and_vocab, n, rnd):
        files, vocab_size = corpus_and_vocab
        model = quiet_train(files, n, vocab_size)
        for _ in range(5):
            k = rnd.randint(0, n - 1)
            ctx = tuple(rnd.randrange(vocab_size) for _ in range(k))
            tok = rnd.randrange(vocab_size)
            got = math.exp(ngram.ngram_logprob(model, ctx, tok))
            want = oracle.prob(files, vocab_size, n, ctx, tok)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(small_corpora(), st.integers(min_value=2, max_value=4), st.randoms())
    def test_random_corpora_normalize(self, corpus_and_vocab, n, rnd):
        files, vocab_size = corpus_and_vocab
        model = quiet_train(files, n, vocab_size)
        for _ in range(5):
            k = rnd.randint(0, n - 1)
            ctx = tuple(rnd.randrange(vocab_size) for _ in range(k))
            assert abs(ngram.distribution(model, ctx).sum() - 1.0) <= 1e-9
