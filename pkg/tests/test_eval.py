"""Metrics: perplexity definition, rank/tie rule, bucket split, reports."""

from __future__ import annotations

import math

import numpy as np
import pytest

import model_harness
import toy_corpus
from sourcelm import eval as ev
from sourcelm import ngram
from sourcelm.corpus import EncodedFile
from sourcelm.neural import perplexity as neural_perplexity


def uniform_model(vocab_size: int):
    """LSTM whose output is exactly uniform: zero output weights."""
    model = model_harness.tiny_model("lstm", vocab_size=vocab_size, k=4,
                                     dtype=np.float64, seed=0)
    model.params.arrays["out_w"][:] = 0.0
    model.params.arrays["out_b"][:] = 0.0
    return model


class TestPerplexityDefinition:
    def test_two_position_arithmetic(self):
        # probs 0.5 and 0.125 -> exp((ln 2 + ln 8) / 2) = 4
        assert abs(ev.perplexity_from(math.log(2) + math.log(8), 2) - 4.0) < 1e-12

    def test_perfect_model_gives_one(self):
        assert ev.perplexity_from(0.0, 17) == 1.0

    def test_zero_count_raises(self):
        with pytest.raises(ValueError):
            ev.perplexity_from(1.0, 0)


class TestRankRule:
    def test_unique_maximum_ranks_first(self):
        assert ev.rank_of(np.array([0.1, 0.6, 0.3]), 1) == 1

    def test_rank_counts_strictly_higher(self):
        assert ev.rank_of(np.array([0.4, 0.3, 0.2, 0.1]), 3) == 4

    def test_tie_breaks_toward_smaller_id(self):
        dist = np.array([0.25, 0.25, 0.25, 0.25])
        assert ev.rank_of(dist, 0) == 1
        assert ev.rank_of(dist, 1) == 2
        assert ev.rank_of(dist, 3) == 4

    def test_rank_five_hits_top5_only(self):
        bucket = ev.Bucket()
        bucket.add(5)
        assert bucket.hits5 == 1 and bucket.hits1 == 0
        bucket.add(6)
        assert bucket.hits5 == 1


class TestUniformModel:
    def files(self):
        return [EncodedFile(ids=list(range(100)), intro=set())]

    def test_perplexity_equals_vocab_size(self):
        report = ev.evaluate_model(uniform_model(100), self.files(),
                                   FakeVocab(100))
        assert abs(report.perplexity - 100.0) < 1e-9 * 100.0

    def test_acc5_hits_are_the_five_lowest_ids(self):
        # targets are 1..99; under the tie rule the uniform model's
        # top-5 is exactly ids 0..4, so hits are targets 1, 2, 3, 4
        report = ev.evaluate_model(uniform_model(100), self.files(),
                                   FakeVocab(100))
        assert report.n_predictions == 99
        assert report.buckets["all"].hits5 == 4
        assert report.buckets["all"].hits1 == 0
        assert abs(report.acc5() - 100.0 * 4 / 99) < 1e-12


class FakeVocab:
    """Minimal stand-in with no identifier terms."""

    def __init__(self, n):
        self.id_to_term = [f"tok{i}" for i in range(n)]

    def __len__(self):
        return len(self.id_to_term)

    def id_is_identifier(self):
        return np.zeros(len(self.id_to_term), dtype=bool)


class TestBucketSplit:
    def run_toy(self):
        files, vocab = toy_corpus.build_encoded()
        model = model_harness.tiny_model("pointer", vocab_size=len(vocab),
                                         k=8, window=4, dtype=np.float64,
                                         seed=3)
        report = ev.evaluate_model(model, files, vocab)
        return report, files, vocab

    def test_bucket_counts_add_up(self):
        report, files, vocab = self.run_toy()
        assert report.buckets["all"].count == (
            report.buckets["ids"].count + report.buckets["other"].count
        )
        assert report.buckets["all"].count == sum(len(f) - 1 for f in files)

    def test_identifier_targets_counted_in_ids(self):
        report, files, vocab = self.run_toy()
        is_id = vocab.id_is_identifier()
        expected = sum(
            int(is_id[t]) for f in files for t in f.ids[1:]
        )
        assert report.buckets["ids"].count == expected
        assert expected > 0

    def test_sentinels_count_as_other(self):
        report, files, vocab = self.run_toy()
        is_id = vocab.id_is_identifier()
        assert not is_id[vocab.num_id]
        assert not is_id[vocab.oov_id]
        # $NUM$ appears as a target in the toy corpus (the 0 literals)
        assert any(t == vocab.num_id for f in files for t in f.ids[1:])

    def test_all_accuracy_is_weighted_mean(self):
        report, _, _ = self.run_toy()
        ids, other = report.buckets["ids"], report.buckets["other"]
        for k in (1, 5):
            weighted = (ids.accuracy(k) * ids.count
                        + other.accuracy(k) * other.count) / (ids.count + other.count)
            assert abs(report.buckets["all"].accuracy(k) - weighted) < 1e-9

    def test_acc5_at_least_acc1(self):
        report, _, _ = self.run_toy()
        for bucket in report.buckets.values():
            assert bucket.accuracy(5) >= bucket.accuracy(1)

    def test_matches_training_perplexity(self):
        report, files, _ = self.run_toy()
        model = model_harness.tiny_model("pointer", vocab_size=36, k=8,
                                         window=4, dtype=np.float64, seed=3)
        pp = neural_perplexity(model, files)
        assert abs(report.perplexity - pp) <= 1e-9 * pp

    def test_batching_does_not_change_report(self):
        files, vocab = toy_corpus.build_encoded()
        model = model_harness.tiny_model("attention", vocab_size=len(vocab),
                                         k=8, window=4, dtype=np.float64,
                                         seed=5)
        solo = ev.evaluate_model(model, files, vocab, batch_size=1)
        packed = ev.evaluate_model(model, files, vocab, batch_size=2,
                                   segment_len=13)
        assert solo.n_predictions == packed.n_predictions
        for name in ev.BUCKETS:
            assert solo.buckets[name].count == packed.buckets[name].count
            assert solo.buckets[name].hits1 == packed.buckets[name].hits1
            assert solo.buckets[name].hits5 == packed.buckets[name].hits5
        assert abs(solo.perplexity - packed.perplexity) < 1e-9


class TestNgramEvaluation:
    def test_perplexity_matches_ngram_module(self):
        files, vocab_size, vocab = toy_corpus.build()
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ngram.DegenerateCounts)
            counts = ngram.train_mkn(files, 3, vocab_size=vocab_size)
        report = ev.evaluate_ngram(counts, files, vocab)
        reference = ngram.perplexity(counts, files)
        assert abs(report.perplexity - reference) <= 1e-9 * reference

    def test_accuracy_beats_chance_on_training_data(self):
        files, vocab_size, vocab = toy_corpus.build()
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ngram.DegenerateCounts)
            counts = ngram.train_mkn(files, 4, vocab_size=vocab_size)
        report = ev.evaluate_ngram(counts, files, vocab)
        assert report.acc() > 100.0 / vocab_size


class TestReportOutput:
    def test_table_has_expected_columns(self):
        report, _, _ = TestBucketSplit().run_toy()
        table = report.format_table("pointer")
        assert "PP" in table and "Acc [%]" in table and "Acc@5 [%]" in table
        assert "IDs" in table and "Other" in table
        assert "pointer" in table

    def test_structured_text_round_trips_counts(self):
        report, _, _ = TestBucketSplit().run_toy()
        text = report.to_text()
        assert f"predictions {report.n_predictions}" in text
        assert f"perplexity {report.perplexity!r}" in text
        for name in ev.BUCKETS:
            assert f"bucket {name} count {report.buckets[name].count}" in text

    def test_empty_bucket_accuracy_is_zero(self):
        assert ev.Bucket().accuracy(1) == 0.0
