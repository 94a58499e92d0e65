"""Interpolated modified Kneser-Ney n-gram language models.

Counts are collected per order: raw gram counts at the top order and
continuation counts (distinct left extensions among raw one-longer
grams) below it. Grams never cross file boundaries; scoring a position
near the start of a file uses the shorter context at a lower order.
The interpolation chain bottoms out at a uniform 1/|V| floor, and an
unseen context yields the lower-order distribution exactly.

Discounts D1, D2, D3+ are estimated per order from that order's
counts-of-counts and clamped into [0, 1]. A formula whose counts are
degenerate (zero denominator, or n1 + 2*n2 = 0) falls back to a fixed
0.75; the DegenerateCounts warning reports which order and slot.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

Gram = tuple[int, ...]


class DegenerateCounts(UserWarning):
    """Counts-of-counts too sparse for a discount formula."""


@dataclass(frozen=True)
class Discounts:
    d1: float
    d2: float
    d3: float

    def for_count(self, c: int) -> float:
        if c == 1:
            return self.d1
        if c == 2:
            return self.d2
        return self.d3


def estimate_discounts(counts_of_counts: Mapping[int, int], label: str = "") -> Discounts:
    """Chen-Goodman discount estimates, clamped into [0, 1]."""
    n1 = counts_of_counts.get(1, 0)
    n2 = counts_of_counts.get(2, 0)
    n3 = counts_of_counts.get(3, 0)
    n4 = counts_of_counts.get(4, 0)
    y_defined = n1 + 2 * n2 > 0
    y = n1 / (n1 + 2 * n2) if y_defined else 0.0
    values = []
    for slot, numer_ok, value in (
        ("D1", n1 > 0, 1.0 - 2.0 * y * n2 / max(n1, 1)),
        ("D2", n2 > 0, 2.0 - 3.0 * y * n3 / max(n2, 1)),
        ("D3+", n3 > 0 and y_defined, 3.0 - 4.0 * y * n4 / max(n3, 1)),
    ):
        if not numer_ok:
            warnings.warn(
                f"degenerate counts-of-counts for {slot}{' of ' + label if label else ''};"
                " using fixed discount 0.75",
                DegenerateCounts,
                stacklevel=2,
            )
            values.append(0.75)
        else:
            values.append(min(1.0, max(0.0, value)))
    return Discounts(*values)


@dataclass
class _ContextStats:
    """Cached per-context scoring terms for one order."""

    total: int
    gamma: float
    kept: dict[int, float]  # token -> (count - D(count)) / total


@dataclass
class NgramCounts:
    """A trained model: count tables plus derived scoring caches.

    tables[m - 1] maps length-(m-1) contexts to token counts for order
    m: raw corpus counts at the top order, continuation counts below.
    counts_of_counts[m - 1] holds (n1, n2, n3, n4) for that table and
    discounts[m - 1] the resulting (D1, D2, D3+).
    """

    order: int
    vocab_size: int
    tables: list[dict[Gram, dict[int, int]]]
    counts_of_counts: list[tuple[int, int, int, int]]
    discounts: list[Discounts]
    _stats: list[dict[Gram, _ContextStats]] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not self._stats:
            self._stats = [
                _build_stats(table, disc)
                for table, disc in zip(self.tables, self.discounts)
            ]


def _build_stats(table: dict[Gram, dict[int, int]], disc: Discounts) -> dict[Gram, _ContextStats]:
    stats: dict[Gram, _ContextStats] = {}
    for context, tokens in table.items():
        total = sum(tokens.values())
        reserved = 0.0
        kept = {}
        for token, c in tokens.items():
            d = disc.for_count(c)
            reserved += d
            kept[token] = max(c - d, 0.0) / total
        stats[context] = _ContextStats(total, reserved / total, kept)
    return stats


def _count_grams(files: Sequence[Sequence[int]], m: int) -> Counter:
    counts: Counter = Counter()
    for ids in files:
        seq = tuple(ids)
        for i in range(len(seq) - m + 1):
            counts[seq[i : i + m]] += 1
    return counts


def _split_table(grams: Mapping[Gram, int]) -> dict[Gram, dict[int, int]]:
    table: dict[Gram, dict[int, int]] = {}
    for gram, c in grams.items():
        table.setdefault(gram[:-1], {})[gram[-1]] = c
    return table


def _counts_of_counts(grams: Mapping[Gram, int]) -> tuple[int, int, int, int]:
    freq = Counter(grams.values())
    return (freq[1], freq[2], freq[3], freq[4])


def train_mkn(
    corpus: Sequence[Sequence[int]],
    n: int,
    vocab_size: int | None = None,
) -> NgramCounts:
    """Count grams and estimate discounts for an order-n model.

    corpus is a list of per-file id sequences; ids must be consecutive
    integers below vocab_size (inferred as max id + 1 when omitted).
    """
    if n < 2:
        raise ValueError(f"order must be at least 2, got {n}")
    files = [list(ids) for ids in corpus if len(ids) > 0]
    if not files:
        raise ValueError("corpus is empty")
    max_id = max(max(ids) for ids in files)
    min_id = min(min(ids) for ids in files)
    if min_id < 0:
        raise ValueError("token ids must be non-negative")
    if vocab_size is None:
        vocab_size = max_id + 1
    elif max_id >= vocab_size:
        raise ValueError(f"token id {max_id} outside vocabulary of size {vocab_size}")

    # Raw m-gram counts feed the top-order table directly and the
    # order-(m-1) continuation table as distinct left extensions.
    raw = {m: _count_grams(files, m) for m in range(2, n + 1)}
    per_order: list[Counter] = []
    for m in range(1, n + 1):
        if m == n:
            per_order.append(raw[m])
        else:
            cont: Counter = Counter()
            for gram in raw[m + 1]:
                cont[gram[1:]] += 1
            per_order.append(cont)

    tables = [_split_table(grams) for grams in per_order]
    cocs = [_counts_of_counts(grams) for grams in per_order]
    discs = [
        estimate_discounts(dict(enumerate(coc, start=1)), label=f"order {m}")
        for m, coc in enumerate(cocs, start=1)
    ]
    return NgramCounts(n, vocab_size, tables, cocs, discs)


def _context_chain(counts: NgramCounts, context: Sequence[int]) -> Iterator[_ContextStats | None]:
    """Stats for orders 1..len(ctx)+1, truncating ctx to order - 1."""
    ctx = tuple(context)
    if len(ctx) > counts.order - 1:
        ctx = ctx[len(ctx) - (counts.order - 1) :]
    for m in range(1, len(ctx) + 2):
        sub = ctx[len(ctx) - (m - 1) :] if m > 1 else ()
        yield counts._stats[m - 1].get(sub)


def ngram_logprob(counts: NgramCounts, context: Sequence[int], token: int) -> float:
    """Natural log of p(token | context).

    Contexts longer than order - 1 are truncated on the left; shorter
    contexts are scored by the matching lower order.
    """
    p = 1.0 / counts.vocab_size
    for stats in _context_chain(counts, context):
        if stats is None or stats.total == 0:
            continue
        p = stats.gamma * p + stats.kept.get(token, 0.0)
    return math.log(p) if p > 0.0 else float("-inf")


def distribution(counts: NgramCounts, context: Sequence[int]) -> np.ndarray:
    """Full next-token distribution, a float64 vector of length |V|."""
    p = np.full(counts.vocab_size, 1.0 / counts.vocab_size)
    for stats in _context_chain(counts, context):
        if stats is None or stats.total == 0:
            continue
        p *= stats.gamma
        for token, kept in stats.kept.items():
            p[token] += kept
    return p


def perplexity(counts: NgramCounts, files: Sequence[Sequence[int]]) -> float:
    """exp of the mean negative log-probability over all targets.

    Positions 1..len-1 of each file are targets; position 0 opens the
    file and is never predicted. Matches the recurrent models' shifted
    input/target convention, so perplexities are comparable.
    """
    total = 0.0
    n_positions = 0
    for ids in files:
        seq = list(ids)
        for t in range(1, len(seq)):
            start = max(0, t - (counts.order - 1))
            total += ngram_logprob(counts, seq[start:t], seq[t])
            n_positions += 1
    if n_positions == 0:
        raise ValueError("no prediction positions in corpus")
    return math.exp(-total / n_positions)


def write_model(counts: NgramCounts, path) -> None:
    """Plain-text dump: header with discounts, then per-order tables."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("mkn-ngram 1\n")
        fh.write(f"order {counts.order}\n")
        fh.write(f"vocab_size {counts.vocab_size}\n")
        for m, (disc, coc) in enumerate(zip(counts.discounts, counts.counts_of_counts), start=1):
            fh.write(f"discounts {m} {disc.d1!r} {disc.d2!r} {disc.d3!r}\n")
            fh.write(f"counts_of_counts {m} {coc[0]} {coc[1]} {coc[2]} {coc[3]}\n")
        for m, table in enumerate(counts.tables, start=1):
            rows = []
            for context, tokens in table.items():
                for token, c in tokens.items():
                    rows.append(context + (token, c))
            rows.sort()
            fh.write(f"table {m} {len(rows)}\n")
            for row in rows:
                fh.write(" ".join(str(v) for v in row) + "\n")


def read_model(path) -> NgramCounts:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "mkn-ngram 1":
        raise ValueError(f"{path}: not an mkn-ngram model file")
    order = int(lines[1].split()[1])
    vocab_size = int(lines[2].split()[1])
    discs: list[Discounts | None] = [None] * order
    cocs: list[tuple[int, int, int, int]] = [(0, 0, 0, 0)] * order
    tables: list[dict[Gram, dict[int, int]]] = [{} for _ in range(order)]
    i = 3
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] == "discounts":
            m = int(parts[1])
            discs[m - 1] = Discounts(float(parts[2]), float(parts[3]), float(parts[4]))
            i += 1
        elif parts[0] == "counts_of_counts":
            m = int(parts[1])
            cocs[m - 1] = (int(parts[2]), int(parts[3]), int(parts[4]), int(parts[5]))
            i += 1
        elif parts[0] == "table":
            m, nrows = int(parts[1]), int(parts[2])
            table = tables[m - 1]
            for row in lines[i + 1 : i + 1 + nrows]:
                values = [int(v) for v in row.split()]
                gram, c = tuple(values[:-1]), values[-1]
                table.setdefault(gram[:-1], {})[gram[-1]] = c
            i += 1 + nrows
        else:
            raise ValueError(f"{path}: unrecognized line {i + 1}: {lines[i]!r}")
    if any(d is None for d in discs):
        raise ValueError(f"{path}: missing discounts for some order")
    return NgramCounts(order, vocab_size, tables, cocs, discs)  # type: ignore[arg-type]
