"""Acceptance suite: nine checks, one test (and one verdict line) each.

Run with `pytest -v tests/test_acceptance.py` to get the per-criterion
pass/fail lines. Budgets are asserted, so a pathologically slow machine
fails loudly instead of silently stretching the protocol.
"""

import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

import model_harness
import mkn_oracle
import norm_fuzz
import toy_corpus
from sourcelm import ngram
from sourcelm.checkpoint import ModelCheckpoint, save_checkpoint
from sourcelm.corpus import encode_file
from sourcelm.eval import evaluate_model
from sourcelm.neural import (Model, ModelConfig, TrainConfig, suggest, train)
from sourcelm.pynorm import dump_normalized, normalize_source

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "scripts"))

from run_mini_corpus import run_ordering  # noqa: E402
from run_synth_benchmark import run_benchmark  # noqa: E402

ARCHS = ("lstm", "attention", "pointer")
GOLDEN = REPO / "tests" / "data" / "golden"


def verdict(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok


def test_criterion_1_gradients_match_finite_differences():
    t0 = time.time()
    errs = {arch: model_harness.gradcheck_model(
                arch, k=8, vocab_size=20, length=12, window=3)
            for arch in ARCHS}
    elapsed = time.time() - t0
    worst = max(errs.values())
    verdict(1, worst <= 1e-4 and elapsed < 60,
            f"max rel err {worst:.2e}, {elapsed:.1f}s; " +
            ", ".join(f"{a} {e:.1e}" for a, e in errs.items()))


def test_criterion_2_distribution_invariants():
    worst_sum = worst_mix = worst_absent = 0.0
    for arch in ARCHS:
        model = model_harness.tiny_model(arch, k=8, vocab_size=20, window=3,
                                         dtype=np.float64)
        report = model_harness.audit_distributions(model, 1000)
        worst_sum = max(worst_sum, report["sum_dev"])
        worst_mix = max(worst_mix, report["mix_dev"])
        worst_absent = max(worst_absent, report["absent_mass"])
    verdict(2, worst_sum <= 1e-6 and worst_mix <= 1e-9
            and worst_absent < 1e-12,
            f"sum dev {worst_sum:.1e}, mix dev {worst_mix:.1e}, "
            f"absent mass {worst_absent:.1e}")


def test_criterion_3_mkn_matches_bruteforce_oracle():
    t0 = time.time()
    files, vocab_size, _ = toy_corpus.build()
    n_tokens = sum(len(f) for f in files)
    assert n_tokens == 200
    pps = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ngram.DegenerateCounts)
        for order in range(3, 7):
            counts = ngram.train_mkn(files, order, vocab_size=vocab_size)
            pp = ngram.perplexity(counts, files)
            oracle = mkn_oracle.perplexity(files, vocab_size, order, files)
            assert abs(pp - oracle) <= 1e-9 * oracle, (order, pp, oracle)
            pps.append(pp)
    elapsed = time.time() - t0
    monotone = all(a >= b - 1e-12 for a, b in zip(pps, pps[1:]))
    verdict(3, monotone and elapsed < 10,
            "train PP n=3..6: " + " >= ".join(f"{p:.3f}" for p in pps)
            + f", {elapsed:.1f}s")


def test_criterion_4_normalization_goldens_and_fuzz():
    snippets = sorted(GOLDEN.glob("*.py"))
    assert len(snippets) == 20
    for src_path in snippets:
        nf = normalize_source(src_path.read_text())
        expected = src_path.with_suffix(".out").read_bytes()
        assert dump_normalized(nf).encode() == expected, src_path.name
    shadow_total = 0
    for seed in range(1000):
        src, expected_stream, shadowed = norm_fuzz.generate(seed)
        nf = normalize_source(src)
        assert norm_fuzz.stream_terms(nf) == expected_stream, seed
        shadow_total += shadowed
    verdict(4, shadow_total > 200,
            f"20 goldens byte-exact, 1000 fuzz files, "
            f"{shadow_total} shadowing events")


def test_criterion_5_planted_benchmark_pointer_vs_lstm():
    t0 = time.time()
    results = run_benchmark(quiet=True)
    elapsed = time.time() - t0
    ptr = results["pointer"].buckets["ids"].accuracy(1) * 100
    lstm = results["lstm"].buckets["ids"].accuracy(1) * 100
    verdict(5, ptr >= 50.0 and ptr >= 2 * lstm and elapsed <= 900,
            f"pointer IDs acc {ptr:.2f}% vs lstm {lstm:.2f}% "
            f"({ptr / max(lstm, 1e-9):.2f}x), {elapsed:.0f}s")


def test_criterion_6_state_carry_equivalence():
    files, vocab = toy_corpus.build_encoded()
    worst = 0.0
    for arch in ARCHS:
        model = model_harness.tiny_model(arch, k=8, vocab_size=len(vocab),
                                         window=4, dtype=np.float64, seed=11)
        one = evaluate_model(model, files, vocab, batch_size=1)
        for seg in (13, 31, 64):
            split = evaluate_model(model, files, vocab, batch_size=1,
                                   segment_len=seg)
            worst = max(worst, abs(one.perplexity - split.perplexity))
    verdict(6, worst <= 1e-6, f"max one-pass vs segmented PP gap {worst:.1e}")


def test_criterion_7_beam_search_matches_exhaustive():
    model, vocab = model_harness.hand_built_markov_model()
    context = [0]
    best_logprob, best_ids = model_harness.exhaustive_best(
        model, vocab, context, m=3)
    got = suggest(model, vocab, context, m=3, beam=2)
    ok = tuple(got.ids) == best_ids and abs(got.logprob - best_logprob) < 1e-9
    verdict(7, ok, f"beam=2 picked {got.terms} logp {got.logprob:.5f}; "
            f"exhaustive over 27 agrees")


MINI_CORPUS_PROTOCOL = dict(k=96, epochs=5, batch_size=4, unroll=15,
                            lr=2.0, decay=0.9, dropout=0.2, min_count=5,
                            split_seed=0, seed=0)


def test_criterion_8_mini_corpus_ordering():
    t0 = time.time()
    results = run_ordering(**MINI_CORPUS_PROTOCOL, quiet=True)
    elapsed = time.time() - t0
    six, lstm, attn = (results["6-gram"], results["lstm"],
                       results["attention"])
    ok = six >= 0.95 * lstm and lstm >= 0.95 * attn and elapsed <= 1800
    verdict(8, ok, f"dev PP 6-gram {six:.2f} >= lstm {lstm:.2f} >= "
            f"attention {attn:.2f} (5% band), {elapsed:.0f}s")


def test_criterion_9_same_seed_runs_are_bit_identical(tmp_path):
    from sourcelm import synth
    from sourcelm.corpus import build_vocab

    corpus = synth.generate(synth.SynthSpec(n_files=12, seed=4))
    nfiles = [sf.nfile for sf in corpus]
    vocab = build_vocab(nfiles, min_count=1)
    encoded = [encode_file(nf, vocab) for nf in nfiles]

    artifacts = []
    for run in range(2):
        blobs = {}
        reports = {}
        for arch in ("lstm", "pointer"):
            config = ModelConfig(arch=arch, vocab_size=len(vocab), k=8,
                                 window=5)
            model = Model(config, seed=9)
            train(model, encoded, TrainConfig(epochs=2, batch_size=2,
                                              unroll=10, lr=0.5, seed=9))
            ckpt = ModelCheckpoint(config={"arch": arch},
                                   vocab_digest=vocab.digest(),
                                   arrays=dict(model.params.arrays))
            path = tmp_path / f"{arch}_{run}.ckpt"
            save_checkpoint(ckpt, path)
            blobs[arch] = path.read_bytes()
            reports[arch] = evaluate_model(model, encoded, vocab,
                                           batch_size=3).to_text()
        artifacts.append((blobs, reports))
    (blobs_a, reports_a), (blobs_b, reports_b) = artifacts
    ok = blobs_a == blobs_b and reports_a == reports_b
    verdict(9, ok, "2 archs x 2 runs: checkpoint bytes and report text "
            "identical")
