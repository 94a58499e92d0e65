"""Command-line pipeline around the library.

Subcommands: normalize, build-vocab, train-ngram, train-neural,
evaluate, suggest (one-shot or interactive), trace, synth-corpus.
Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import synth
from .checkpoint import (CorruptCheckpoint, ModelCheckpoint, VocabMismatch,
                         load_checkpoint, save_checkpoint)
from .corpus import (EmptyCorpus, TooFewProjects, Vocabulary, build_vocab,
                     encode_file, read_vocab, write_vocab)
from .eval import evaluate_model, evaluate_ngram
from .neural import (DecodeState, DivergedLoss, Model, ModelConfig,
                     TrainConfig, suggest, trace, train)
from .neural.models import ARCHITECTURES
from .ngram import read_model, train_mkn, write_model
from .pylex import LexError, read_tokens, tokenize
from .pynorm import normalize, read_normalized, write_normalized
from .tensor import Params

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class BadConfig(ValueError):
    """Flag or config-file value that does not form a valid run."""


class _UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """One training/evaluation run, assembled from flags and config file."""

    arch: str = "lstm"
    k: int = 200
    window: int | None = None       # memory/attention span; per-arch default
    scatter_c: float = 1000.0
    dropout: float = 0.1
    vocab_cap: int | None = None    # build-vocab: keep at most this many terms
    batch_size: int | None = None   # per-arch default when unset
    unroll: int = 50
    epochs: int = 10
    lr: float = 0.7
    decay: float = 0.9
    clip: float = 5.0
    seed: int = 0
    sample_size: int | None = None  # sampled-softmax candidates; None = full
    corpus: str | None = None
    vocab: str | None = None
    checkpoint: str | None = None
    report: str | None = None

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise BadConfig(f"unknown architecture {self.arch!r}")
        positive = dict(k=self.k, unroll=self.unroll, epochs=self.epochs,
                        lr=self.lr, decay=self.decay, clip=self.clip,
                        scatter_c=self.scatter_c)
        for name, value in positive.items():
            if value <= 0:
                raise BadConfig(f"{name} must be positive, got {value}")
        for name, value in dict(window=self.window, vocab_cap=self.vocab_cap,
                                batch_size=self.batch_size,
                                sample_size=self.sample_size).items():
            if value is not None and value <= 0:
                raise BadConfig(f"{name} must be positive, got {value}")
        if not 0.0 <= self.dropout < 1.0:
            raise BadConfig(f"dropout must be in [0, 1), got {self.dropout}")
        if self.seed < 0:
            raise BadConfig(f"seed must be non-negative, got {self.seed}")

    def resolved_window(self) -> int:
        if self.window is not None:
            return self.window
        return 50 if self.arch == "attention" else 20

    def resolved_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 30 if self.arch == "pointer" else 75

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(arch=self.arch, vocab_size=vocab_size, k=self.k,
                           window=self.resolved_window(),
                           scatter_c=self.scatter_c, dropout=self.dropout)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs,
                           batch_size=self.resolved_batch_size(),
                           unroll=self.unroll, lr=self.lr,
                           lr_decay=self.decay, clip=self.clip,
                           seed=self.seed, sampled_softmax=self.sample_size)


_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(field: dataclasses.Field, raw: str):
    text = raw.strip()
    if field.name == "arch":
        return text
    if field.type.startswith("str"):
        return text
    base = int if field.type.startswith("int") else float
    try:
        return base(text)
    except ValueError:
        raise BadConfig(
            f"config value {field.name}={raw!r} is not {base.__name__}")


def read_config_file(path) -> dict:
    """Line-based key=value file; # comments and blank lines ignored."""
    values: dict = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise BadConfig(f"cannot read config file: {exc}")
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise BadConfig(f"{path}:{lineno}: expected key=value, got {line!r}")
        name = key.strip().replace("-", "_")
        if name not in _RUN_FIELDS:
            raise BadConfig(f"{path}:{lineno}: unknown config key {key.strip()!r}")
        values[name] = _coerce(_RUN_FIELDS[name], value)
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overlaid by --config file values, overlaid by flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for name in _RUN_FIELDS:
        if hasattr(args, name):  # flags use SUPPRESS: present only if given
            merged[name] = getattr(args, name)
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise BadConfig(str(exc))


# ---------------------------------------------------------------------------
# corpus plumbing


def _norm_pairs(corpus_dir) -> list[tuple[Path, Path]]:
    root = Path(corpus_dir)
    if not root.is_dir():
        raise EmptyCorpus(f"{corpus_dir}: not a directory")
    pairs = []
    for tok in sorted(root.rglob("*.tokens")):
        sym = tok.with_suffix(".symbols")
        if not sym.exists():
            raise EmptyCorpus(f"{tok}: missing {sym.name} sidecar")
        pairs.append((tok, sym))
    if not pairs:
        raise EmptyCorpus(f"{corpus_dir}: no .tokens files")
    return pairs


def _load_corpus(corpus_dir):
    return [read_normalized(tok, sym) for tok, sym in _norm_pairs(corpus_dir)]


def _context_terms(path) -> list[str]:
    from .corpus import token_term
    tokens = read_tokens(path)
    terms = [token_term(t) for t in tokens]
    return [t for t in terms if t is not None]


def _model_from_checkpoint(ckpt: ModelCheckpoint, vocab: Vocabulary) -> Model:
    config = ModelConfig(
        arch=ckpt.config["arch"],
        vocab_size=ckpt.config_int("vocab_size"),
        k=ckpt.config_int("k"),
        window=ckpt.config_int("window"),
        scatter_c=ckpt.config_float("scatter_c"),
        dropout=ckpt.config_float("dropout"),
    )
    if config.vocab_size != len(vocab):
        raise VocabMismatch(
            f"checkpoint vocab size {config.vocab_size} != supplied {len(vocab)}")
    params = Params()
    for name, arr in ckpt.arrays.items():
        params.add(name, arr)
    return Model(config, params=params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_normalize(args) -> int:
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    sources: list[tuple[Path, Path]] = []  # (file, base dir for relpath)
    for raw in args.inputs:
        path = Path(raw)
        if path.is_dir():
            sources += [(p, path) for p in sorted(path.rglob("*.py"))]
        elif path.is_file():
            sources.append((path, path.parent))
        else:
            raise EmptyCorpus(f"{raw}: no such file or directory")
    if not sources:
        raise EmptyCorpus("no .py files found under the given inputs")
    for src, base in sources:
        rel = src.relative_to(base).with_suffix("")
        dest = out_root / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        try:
            text = src.read_text(encoding="utf-8", errors="replace")
            nfile = normalize(tokenize(text), numbering=args.numbering,
                              seed=args.seed)
        except LexError as exc:
            print(f"data error: {src}: {exc}", file=sys.stderr)
            return EXIT_DATA
        write_normalized(nfile, dest.with_suffix(".tokens"),
                         dest.with_suffix(".symbols"))
    print(f"normalized {len(sources)} files into {out_root}")
    return EXIT_OK


def _cap_vocab(vocab: Vocabulary, cap: int) -> Vocabulary:
    if cap >= len(vocab):
        return vocab
    from .corpus import NUM_TOKEN, OOV_TOKEN
    keep = {OOV_TOKEN, NUM_TOKEN}
    ranked = sorted(
        (t for t in vocab.id_to_term if t not in keep),
        key=lambda t: (-vocab.counts[vocab.term_to_id[t]], t))
    for term in ranked:
        if len(keep) >= cap:
            break
        keep.add(term)
    terms = [t for t in vocab.id_to_term if t in keep]
    counts = [vocab.counts[vocab.term_to_id[t]] for t in terms]
    return Vocabulary(terms, counts)


def cmd_build_vocab(args) -> int:
    run = build_run_config(args)
    files = _load_corpus(args.corpus)
    vocab = build_vocab(files, min_count=args.min_count)
    if run.vocab_cap is not None:
        vocab = _cap_vocab(vocab, run.vocab_cap)
    write_vocab(vocab, args.out)
    print(f"vocabulary: {len(vocab)} terms (digest {vocab.digest()}) -> {args.out}")
    return EXIT_OK


def cmd_train_ngram(args) -> int:
    vocab = read_vocab(args.vocab)
    files = _load_corpus(args.corpus)
    ids = [encode_file(f, vocab).ids for f in files]
    counts = train_mkn(ids, args.order, vocab_size=len(vocab))
    write_model(counts, args.out)
    print(f"{args.order}-gram model over {sum(map(len, ids))} tokens -> {args.out}")
    return EXIT_OK


def cmd_train_neural(args) -> int:
    run = build_run_config(args)
    vocab = read_vocab(args.vocab)
    files = _load_corpus(args.corpus)
    encoded = [encode_file(f, vocab) for f in files]
    model = Model(run.model_config(len(vocab)), seed=run.seed)

    def report(stats):
        print(f"epoch {stats.epoch:3d}  loss {stats.loss:.4f}  "
              f"lr {stats.lr:.4f}  {stats.seconds:.1f}s", flush=True)

    train(model, encoded, run.train_config(), on_epoch=report)

    snapshot = {
        "arch": run.arch, "vocab_size": str(len(vocab)), "k": str(run.k),
        "window": str(run.resolved_window()),
        "scatter_c": repr(run.scatter_c), "dropout": repr(run.dropout),
        "batch_size": str(run.resolved_batch_size()),
        "unroll": str(run.unroll), "epochs": str(run.epochs),
        "lr": repr(run.lr), "decay": repr(run.decay), "clip": repr(run.clip),
        "seed": str(run.seed),
        "sample_size": str(run.sample_size or 0),
    }
    ckpt = ModelCheckpoint(config=snapshot, vocab_digest=vocab.digest(),
                           arrays=dict(model.params.arrays))
    save_checkpoint(ckpt, args.out)
    print(f"checkpoint -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    vocab = read_vocab(args.vocab)
    files = _load_corpus(args.corpus)
    if (args.checkpoint is None) == (args.ngram is None):
        raise BadConfig("evaluate needs exactly one of --checkpoint/--ngram")
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint, expect_digest=vocab.digest())
        model = _model_from_checkpoint(ckpt, vocab)
        encoded = [encode_file(f, vocab) for f in files]
        report = evaluate_model(model, encoded, vocab,
                                batch_size=args.batch_size,
                                segment_len=args.segment_len)
        label = ckpt.config["arch"]
    else:
        counts = read_model(args.ngram)
        if counts.vocab_size != len(vocab):
            raise VocabMismatch(
                f"n-gram vocab size {counts.vocab_size} != supplied {len(vocab)}")
        ids = [encode_file(f, vocab).ids for f in files]
        report = evaluate_ngram(counts, ids, vocab)
        label = f"{counts.order}-gram"
    if not np.isfinite(report.nll_total):
        print("error: non-finite log-likelihood", file=sys.stderr)
        return EXIT_DIVERGED
    print(report.format_table(label))
    if args.report:
        Path(args.report).write_text(report.to_text(), encoding="utf-8")
        print(f"report -> {args.report}")
    return EXIT_OK


def _print_suggestions(session: DecodeState) -> None:
    for term, prob in session.top_k(5):
        print(f"  {prob:8.5f}  {term}")
    lam = session.lam()
    if lam is not None:
        print(f"  lambda: lm {lam[0]:.4f} / copy {lam[1]:.4f}")


def _repl(model: Model, vocab: Vocabulary, primer: list[str]) -> int:
    session = DecodeState(model, vocab)
    for term in primer:
        session.feed_term(term)
    print(f"{model.config.arch} model, |V|={len(vocab)}; "
          "enter tokens (:reset clears state, :quit exits)")
    while True:
        try:
            line = input("> ")
        except EOFError:
            print()
            return EXIT_OK
        line = line.strip()
        if not line:
            continue
        if line in (":quit", ":q"):
            return EXIT_OK
        if line == ":reset":
            session.reset()
            for term in primer:
                session.feed_term(term)
            print("state cleared")
            continue
        for term in line.split():
            if term not in vocab.term_to_id:
                print(f"warning: unknown token {term!r} -> $OOV$",
                      file=sys.stderr)
            session.feed_term(term)
        _print_suggestions(session)


def cmd_suggest(args) -> int:
    vocab = read_vocab(args.vocab)
    ckpt = load_checkpoint(args.checkpoint, expect_digest=vocab.digest())
    model = _model_from_checkpoint(ckpt, vocab)
    primer = _context_terms(args.context) if args.context else []
    if args.interactive:
        return _repl(model, vocab, primer)
    if not primer:
        raise BadConfig("one-shot suggest needs --context")
    ids = [vocab.encode_term(t) for t in primer]
    result = suggest(model, vocab, ids, args.m, beam=args.beam)
    print(" ".join(result.terms))
    return EXIT_OK


def cmd_trace(args) -> int:
    vocab = read_vocab(args.vocab)
    ckpt = load_checkpoint(args.checkpoint, expect_digest=vocab.digest())
    model = _model_from_checkpoint(ckpt, vocab)
    terms = _context_terms(args.context)
    if not terms:
        raise BadConfig("trace needs a non-empty --context")
    ids = [vocab.encode_term(t) for t in terms]
    records = trace(model, vocab, ids)

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for rec in records:
            out.write(json.dumps({
                "position": rec.position,
                "term": rec.term,
                "lam": list(rec.lam) if rec.lam is not None else None,
                "slots": [[t, a] for t, a in rec.slots],
                "top5": [[t, p] for t, p in rec.top5],
            }) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
            print(f"{len(records)} records -> {args.out}")

    if args.heatmap:
        window = model.config.window
        with open(args.heatmap, "w", encoding="utf-8") as fh:
            for rec in records:
                row = [0.0] * window
                for j, (_, alpha) in enumerate(rec.slots):
                    row[j] = alpha
                fh.write(" ".join(f"{v:.6f}" for v in row) + "\n")
        print(f"heatmap matrix ({len(records)} x {window}) -> {args.heatmap}")
    return EXIT_OK


def cmd_synth_corpus(args) -> int:
    spec = synth.SynthSpec(n_files=args.files, idents_per_file=args.idents,
                           reuses=args.reuses, d_min=args.d_min,
                           d_max=args.d_max, n_vars=args.pool,
                           n_keys=args.pool, seed=args.seed)
    files = synth.generate(spec)
    paths = synth.write_corpus(files, args.out)
    truth = Path(args.out) / "ground_truth.tsv"
    with open(truth, "w", encoding="utf-8") as fh:
        fh.write("file\tintro_positions\treuse_positions\n")
        for sf, (tok, _) in zip(files, paths):
            intros = ",".join(map(str, sf.intro_positions))
            reuses = ",".join(map(str, sf.reuse_positions))
            fh.write(f"{Path(tok).name}\t{intros}\t{reuses}\n")
    print(f"{len(files)} files -> {args.out} (ground truth in {truth.name})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_run_flags(sub, names):
    sub.add_argument("--config", help="key=value config file; flags override")
    flag_types = {
        "arch": dict(choices=list(ARCHITECTURES)),
        "k": dict(type=int), "window": dict(type=int),
        "scatter_c": dict(type=float), "dropout": dict(type=float),
        "vocab_cap": dict(type=int), "batch_size": dict(type=int),
        "unroll": dict(type=int), "epochs": dict(type=int),
        "lr": dict(type=float), "decay": dict(type=float),
        "clip": dict(type=float), "seed": dict(type=int),
        "sample_size": dict(type=int),
    }
    for name in names:
        flag = "--" + name.replace("_", "-")
        sub.add_argument(flag, default=argparse.SUPPRESS, **flag_types[name])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sourcelm",
                     description="Token-level source model pipeline")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("normalize", help="lex and anonymize .py files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--numbering", choices=["sequential", "random"],
                   default="sequential")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_normalize)

    p = subs.add_parser("build-vocab", help="count terms, write vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=5)
    _add_run_flags(p, ["vocab_cap"])
    p.set_defaults(func=cmd_build_vocab)

    p = subs.add_parser("train-ngram", help="fit a smoothed n-gram model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--order", type=int, default=3)
    p.set_defaults(func=cmd_train_ngram)

    p = subs.add_parser("train-neural", help="train an LSTM-family model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    _add_run_flags(p, ["arch", "k", "window", "scatter_c", "dropout",
                       "batch_size", "unroll", "epochs", "lr", "decay",
                       "clip", "seed", "sample_size"])
    p.set_defaults(func=cmd_train_neural)

    p = subs.add_parser("evaluate", help="perplexity/accuracy report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--ngram")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--segment-len", type=int, default=None)
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("suggest", help="next-token suggestions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--context", help=".tokens file to prime on")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--interactive", action="store_true")
    p.set_defaults(func=cmd_suggest)

    p = subs.add_parser("trace", help="per-token pointer trace")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--context", required=True)
    p.add_argument("--out", help="write records here instead of stdout")
    p.add_argument("--heatmap", help="also write a step x slot alpha matrix")
    p.set_defaults(func=cmd_trace)

    p = subs.add_parser("synth-corpus", help="planted long-range benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--files", type=int, default=80)
    p.add_argument("--idents", type=int, default=6)
    p.add_argument("--reuses", type=int, default=3)
    p.add_argument("--d-min", type=int, default=60)
    p.add_argument("--d-max", type=int, default=100)
    p.add_argument("--pool", type=int, default=6,
                   help="size of the identifier and key pools")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergedLoss as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (VocabMismatch, CorruptCheckpoint, EmptyCorpus, TooFewProjects,
            LexError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BadConfig, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
