"""Perplexity and top-k accuracy with the identifier / other split.

A prediction is correct at k when the target sits among the k highest-
probability tokens, ties broken toward smaller token ids. Targets are
bucketed by what the *target* term is: anonymous identifier names count
as IDs, everything else (keywords, punctuation, $NUM$, $OOV$, layout)
as Other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ngram as ngram_mod
from .corpus import BatchStream, EncodedFile, Vocabulary
from .neural.models import Model

BUCKETS = ("all", "ids", "other")


@dataclass
class Bucket:
    count: int = 0
    hits1: int = 0
    hits5: int = 0

    def add(self, rank: int) -> None:
        self.count += 1
        if rank == 1:
            self.hits1 += 1
        if rank <= 5:
            self.hits5 += 1

    def accuracy(self, top_k: int = 1) -> float:
        """Percentage in [0, 100]; 0.0 on an empty bucket."""
        if self.count == 0:
            return 0.0
        hits = self.hits1 if top_k == 1 else self.hits5
        return 100.0 * hits / self.count


@dataclass
class MetricsReport:
    n_predictions: int = 0
    nll_total: float = 0.0
    buckets: dict[str, Bucket] = field(
        default_factory=lambda: {name: Bucket() for name in BUCKETS}
    )

    @property
    def perplexity(self) -> float:
        return perplexity_from(self.nll_total, self.n_predictions)

    def acc(self, bucket: str = "all") -> float:
        return self.buckets[bucket].accuracy(1)

    def acc5(self, bucket: str = "all") -> float:
        return self.buckets[bucket].accuracy(5)

    def record(self, rank: int, nll: float, is_identifier: bool) -> None:
        self.n_predictions += 1
        self.nll_total += nll
        self.buckets["all"].add(rank)
        self.buckets["ids" if is_identifier else "other"].add(rank)

    def format_table(self, label: str = "model") -> str:
        """Report table: PP, then Acc and Acc@5 as All / IDs / Other."""
        header = (f"{'':16s} {'PP':>8s} | {'Acc [%]':>8s} {'All':>6s} "
                  f"{'IDs':>6s} {'Other':>6s} | {'Acc@5 [%]':>9s} "
                  f"{'All':>6s} {'IDs':>6s} {'Other':>6s}")
        row = (f"{label:16s} {self.perplexity:8.2f} | {'':8s} "
               f"{self.acc('all'):6.2f} {self.acc('ids'):6.2f} "
               f"{self.acc('other'):6.2f} | {'':9s} "
               f"{self.acc5('all'):6.2f} {self.acc5('ids'):6.2f} "
               f"{self.acc5('other'):6.2f}")
        return header + "\n" + row

    def to_text(self) -> str:
        """Structured key-value form for report files."""
        lines = [
            f"predictions {self.n_predictions}",
            f"nll {self.nll_total!r}",
            f"perplexity {self.perplexity!r}",
        ]
        for name in BUCKETS:
            b = self.buckets[name]
            lines.append(f"bucket {name} count {b.count} "
                         f"hits1 {b.hits1} hits5 {b.hits5}")
        return "\n".join(lines) + "\n"


def perplexity_from(nll_total: float, count: int) -> float:
    """exp of the mean negative natural log-likelihood."""
    if count == 0:
        raise ValueError("no positions to score")
    return math.exp(nll_total / count)


def rank_of(dist: np.ndarray, target: int) -> int:
    """1-based rank of the target under the deterministic tie rule.

    Tokens with strictly higher probability rank ahead; among equal
    probabilities, smaller ids come first.
    """
    p = dist[target]
    higher = int(np.count_nonzero(dist > p))
    ties_before = int(np.count_nonzero(dist[:target] == p))
    return 1 + higher + ties_before


def evaluate_model(model: Model, files: list[EncodedFile], vocab: Vocabulary,
                   *, batch_size: int = 16,
                   segment_len: int | None = None) -> MetricsReport:
    """Score every next-token prediction of a neural model.

    Dropout off; state detaches each step so no graph accumulates.
    The scored positions are the same regardless of batch and segment
    sizes, which only affect throughput.
    """
    if len(vocab) != model.config.vocab_size:
        raise ValueError("model and data vocabulary sizes differ")
    is_identifier = vocab.id_is_identifier()
    report = MetricsReport()
    files = [f for f in files if len(f) > 0]
    if not files:
        return report
    batch_size = min(batch_size, len(files))
    stream = BatchStream(files, batch_size,
                         segment_len or max(len(f) for f in files))
    leaves = model.params.begin()
    state = model.fresh_state(batch_size)
    for seg in stream:
        length = seg.inputs.shape[1]
        for t in range(length):
            if not seg.mask[:, t].any() and not seg.reset[:, t].any():
                continue
            state = model.reset_lanes(state, seg.reset[:, t])
            out, state = model.step(leaves, state, seg.inputs[:, t],
                                    intro=seg.intro[:, t])
            state = model.detach_state(state)
            rows = np.nonzero(seg.mask[:, t])[0]
            if not rows.size:
                continue
            dist = out.distribution().value
            for b in rows:
                target = int(seg.targets[b, t])
                p = float(dist[b, target])
                report.record(
                    rank=rank_of(dist[b], target),
                    nll=-math.log(p) if p > 0 else math.inf,
                    is_identifier=bool(is_identifier[target]),
                )
    return report


def evaluate_ngram(counts: ngram_mod.NgramCounts, files: list[list[int]],
                   vocab: Vocabulary) -> MetricsReport:
    """Score an n-gram model the same way: positions 1..len-1 per file."""
    if len(vocab) != counts.vocab_size:
        raise ValueError("model and data vocabulary sizes differ")
    is_identifier = vocab.id_is_identifier()
    report = MetricsReport()
    for file_ids in files:
        for pos in range(1, len(file_ids)):
            context = file_ids[:pos]
            target = file_ids[pos]
            dist = ngram_mod.distribution(counts, context)
            p = float(dist[target])
            report.record(
                rank=rank_of(dist, target),
                nll=-math.log(p) if p > 0 else math.inf,
                is_identifier=bool(is_identifier[target]),
            )
    return report
