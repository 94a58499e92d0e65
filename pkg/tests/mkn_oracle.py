"""Brute-force interpolated modified Kneser-Ney oracle.

Direct transcription of the Chen-Goodman formulas, kept deliberately
naive so it can be checked by hand: count tables are plain Counters,
probabilities are computed by the textbook recursion with no caching
of per-context statistics, and nothing is shared with the production
implementation in sourcelm.ngram. Only suitable for tiny corpora.

Conventions (shared with the implementation by definition, not code):
  - raw counts at the top order, continuation counts below it, where
    the continuation count of an m-gram is the number of distinct
    single-token left extensions among raw (m+1)-grams;
  - per-order discounts from that order's counts-of-counts, clamped
    into [0, 1], with a fixed 0.75 fallback when a formula's counts
    are degenerate (denominator n_k = 0, or n1 + 2*n2 = 0);
  - grams never cross file boundaries;
  - the chain bottoms out at a uniform 1/|V| distribution;
  - an unseen context contributes nothing: the probability equals the
    lower-order value exactly.
"""

from __future__ import annotations

import math
from collections import Counter


def raw_counts(files, m):
    """Count every m-gram that fits inside a single file."""
    counts = Counter()
    for ids in files:
        for i in range(len(ids) - m + 1):
            counts[tuple(ids[i : i + m])] += 1
    return counts


def continuation_counts(files, m):
    """Number of distinct left extensions of each m-gram."""
    counts = Counter()
    for gram in raw_counts(files, m + 1):
        counts[gram[1:]] += 1
    return counts


def order_counts(files, m, top):
    if m == top:
        return raw_counts(files, m)
    return continuation_counts(files, m)


def discounts(counts):
    """(D1, D2, D3+) from counts-of-counts, clamped into [0, 1]."""
    freq = Counter(counts.values())
    n1, n2, n3, n4 = freq[1], freq[2], freq[3], freq[4]
    y_defined = n1 + 2 * n2 > 0
    y = n1 / (n1 + 2 * n2) if y_defined else 0.0
    d1 = 1.0 - 2.0 * y * n2 / n1 if n1 > 0 else 0.75
    d2 = 2.0 - 3.0 * y * n3 / n2 if n2 > 0 else 0.75
    d3 = 3.0 - 4.0 * y * n4 / n3 if n3 > 0 and y_defined else 0.75

    def clamp(d):
        return min(1.0, max(0.0, d))

    return clamp(d1), clamp(d2), clamp(d3)


def prob(files, vocab_size, order, context, token):
    """p(token | context) under the interpolated MKN model.

    context may be any length; only its last order-1 tokens matter.
    """
    context = tuple(context)
    if len(context) > order - 1:
        context = context[len(context) - (order - 1) :]
    return _level(files, vocab_size, order, len(context) + 1, context, token)


def _level(files, vocab_size, top, m, context, token):
    if m == 0:
        return 1.0 / vocab_size
    lower = _level(files, vocab_size, top, m - 1, context[1:], token)
    counts = order_counts(files, m, top)
    d1, d2, d3 = discounts(counts)
    seen = {g[-1]: c for g, c in counts.items() if g[:-1] == context}
    total = sum(seen.values())
    if total == 0:
        return lower
    count_1 = sum(1 for c in seen.values() if c == 1)
    count_2 = sum(1 for c in seen.values() if c == 2)
    count_3p = sum(1 for c in seen.values() if c >= 3)
    gamma = (d1 * count_1 + d2 * count_2 + d3 * count_3p) / total
    c = seen.get(token, 0)
    if c == 0:
        kept = 0.0
    elif c == 1:
        kept = max(c - d1, 0.0)
    elif c == 2:
        kept = max(c - d2, 0.0)
    else:
        kept = max(c - d3, 0.0)
    return kept / total + gamma * lower


def logprob(files, vocab_size, order, context, token):
    return math.log(prob(files, vocab_size, order, context, token))


def perplexity(files, vocab_size, order, eval_files):
    """exp of the mean negative log-probability.

    Scores positions 1..len-1 of each file; position 0 has no
    preceding context and is never a prediction target.
    """
    total = 0.0
    n = 0
    for ids in eval_files:
        for t in range(1, len(ids)):
            start = max(0, t - (order - 1))
            context = tuple(ids[start:t])
            total += math.log(prob(files, vocab_size, order, context, ids[t]))
            n += 1
    if n == 0:
        raise ValueError("no prediction positions")
    return math.exp(-total / n)
