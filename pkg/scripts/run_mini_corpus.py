#!/usr/bin/env python3
"""Model-family ordering on the bundled stdlib mini-corpus.

Normalizes the 100 bundled files, splits them by project, then compares
dev perplexity of a 6-gram model, a plain LSTM, and a windowed-attention
LSTM trained with identical budgets.  Expected direction, with a 5%
tolerance band: 6-gram >= LSTM >= attention.
"""

import argparse
import sys
import time
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from sourcelm.corpus import build_vocab, encode_file, split_projects
from sourcelm.eval import evaluate_model, evaluate_ngram
from sourcelm.neural import Model, ModelConfig, TrainConfig, train
from sourcelm.ngram import train_mkn
from sourcelm.pylex import tokenize
from sourcelm.pynorm import normalize

CORPUS = REPO / "data" / "mini_corpus"
TOLERANCE = 0.95  # each ordering comparison may be violated by at most 5%


def load_normalized(corpus_dir=CORPUS, seed=0):
    """(project, NormalizedFile) pairs for every bundled source file."""
    out = []
    for path in sorted(Path(corpus_dir).rglob("*.py")):
        project = path.parent.name
        text = path.read_text(encoding="utf-8", errors="replace")
        out.append((project, normalize(tokenize(text), seed=seed)))
    return out


def run_ordering(k=64, epochs=5, batch_size=8, unroll=20, lr=0.7, decay=0.9,
                 dropout=0.1, min_count=3, split_seed=0, seed=0, quiet=False):
    """Train all three models; return {"6-gram"|"lstm"|"attention": PP}."""
    say = (lambda *a: None) if quiet else print

    t0 = time.time()
    pairs = load_normalized()
    projects = sorted({proj for proj, _ in pairs})
    # held-out set = dev + test shares of the 3-way project split
    split = split_projects(projects, ratios=(0.8, 0.1, 0.1), seed=split_seed)
    train_files = [nf for proj, nf in pairs
                   if split.assignment[proj] == "train"]
    dev_files = [nf for proj, nf in pairs
                 if split.assignment[proj] != "train"]
    say(f"normalized {len(pairs)} files in {time.time() - t0:.1f}s; "
        f"{len(train_files)} train / {len(dev_files)} dev "
        f"(held out: {[p for p in projects if split.assignment[p] != 'train']})")

    vocab = build_vocab(train_files, min_count=min_count)
    enc_train = [encode_file(nf, vocab) for nf in train_files]
    enc_dev = [encode_file(nf, vocab) for nf in dev_files]
    n_train = sum(len(e.ids) for e in enc_train)
    n_dev = sum(len(e.ids) for e in enc_dev)
    say(f"|V|={len(vocab)}  train tokens={n_train}  dev tokens={n_dev}")

    results = {}

    t0 = time.time()
    counts = train_mkn([e.ids for e in enc_train], 6, vocab_size=len(vocab))
    report = evaluate_ngram(counts, [e.ids for e in enc_dev], vocab)
    results["6-gram"] = report.perplexity
    say(f"6-gram      dev PP {report.perplexity:8.2f}   "
        f"({time.time() - t0:.0f}s)")

    for arch in ("lstm", "attention"):
        t0 = time.time()
        config = ModelConfig(arch=arch, vocab_size=len(vocab), k=k,
                             window=20, dropout=dropout)
        model = Model(config, seed=seed)
        tcfg = TrainConfig(epochs=epochs, batch_size=batch_size,
                           unroll=unroll, lr=lr, lr_decay=decay, seed=seed)
        stats = train(model, enc_train, tcfg)
        report = evaluate_model(model, enc_dev, vocab, batch_size=8)
        results[arch] = report.perplexity
        say(f"{arch:11s} dev PP {report.perplexity:8.2f}   "
            f"({time.time() - t0:.0f}s, final train loss "
            f"{stats[-1].loss:.3f})")
    return results


def ordering_holds(results, tolerance=TOLERANCE):
    return (results["6-gram"] >= tolerance * results["lstm"]
            and results["lstm"] >= tolerance * results["attention"])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--unroll", type=int, default=20)
    ap.add_argument("--lr", type=float, default=0.7)
    ap.add_argument("--decay", type=float, default=0.9)
    ap.add_argument("--dropout", type=float, default=0.1)
    ap.add_argument("--min-count", type=int, default=3)
    ap.add_argument("--split-seed", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    t0 = time.time()
    results = run_ordering(k=args.k, epochs=args.epochs,
                           batch_size=args.batch_size, unroll=args.unroll,
                           lr=args.lr, decay=args.decay,
                           min_count=args.min_count,
                           split_seed=args.split_seed, seed=args.seed)
    ok = ordering_holds(results)
    print(f"\nordering 6-gram({results['6-gram']:.2f}) >= "
          f"lstm({results['lstm']:.2f}) >= "
          f"attention({results['attention']:.2f}) within 5%: "
          f"{'PASS' if ok else 'FAIL'}  [{time.time() - t0:.0f}s total]")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
