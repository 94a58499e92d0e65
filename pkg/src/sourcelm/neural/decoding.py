"""Suggestion decoding: greedy/beam completion, incremental sessions, traces.

Decoding consumes raw term streams (not pre-encoded files), so it has
to re-detect identifier introductions itself: a term introduces an
identifier the first time an anonymous-identifier-shaped, in-vocabulary
term appears since the last reset. That matches how the corpus encoder
marks intro positions within a file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..corpus import Vocabulary
from .models import Model, State, StepOutput


@dataclass(frozen=True)
class Suggestion:
    ids: tuple[int, ...]
    terms: tuple[str, ...]
    logprob: float  # natural-log joint probability


@dataclass(frozen=True)
class TraceRecord:
    position: int
    term: str  # the input token consumed at this step
    lam: tuple[float, float] | None  # omitted (None) while memory is empty
    slots: list[tuple[str, float]]  # (token, alpha), filled slots oldest first
    top5: list[tuple[str, float]]  # next-token predictions, prob non-increasing


class DecodeState:
    """One lane of incremental decoding over frozen parameters."""

    def __init__(self, model: Model, vocab: Vocabulary):
        if len(vocab) != model.config.vocab_size:
            raise ValueError(
                f"vocabulary size {len(vocab)} does not match model "
                f"vocabulary {model.config.vocab_size}"
            )
        self.model = model
        self.vocab = vocab
        self.is_identifier = vocab.id_is_identifier()
        self.leaves = model.params.begin()
        self.reset()

    def reset(self) -> None:
        self.state: State = self.model.fresh_state(1)
        self.seen_ids: set[int] = set()
        self.slot_terms: list[str] = [""] * self.model.config.window
        self.last: StepOutput | None = None

    def intro_flag(self, token_id: int) -> bool:
        return bool(self.is_identifier[token_id]) and token_id not in self.seen_ids

    def feed_id(self, token_id: int) -> StepOutput:
        """Consume one token; returns the step output predicting the next."""
        intro = self.intro_flag(token_id)
        slot = int(self.state.mem_cursor[0]) if self.state.mem_cursor is not None else 0
        out, state = self.model.step(
            self.leaves, self.state, np.array([token_id]),
            intro=np.array([intro]),
        )
        self.state = self.model.detach_state(state)
        if self.is_identifier[token_id]:
            self.seen_ids.add(token_id)
        wrote = self.model.config.arch == "attention" or (
            self.model.config.arch == "pointer" and intro
        )
        if wrote:
            self.slot_terms[slot] = self.vocab.id_to_term[token_id]
        self.last = out
        return out

    def feed_term(self, term: str) -> StepOutput:
        return self.feed_id(self.vocab.encode_term(term))

    def distribution(self) -> np.ndarray:
        if self.last is None:
            raise ValueError("no tokens consumed yet")
        return self.last.distribution().value[0]

    def top_k(self, k: int = 5) -> list[tuple[str, float]]:
        """Highest-probability next tokens; ties broken by smaller id."""
        dist = self.distribution()
        order = np.argsort(-dist, kind="stable")[:k]
        return [(self.vocab.id_to_term[i], float(dist[i])) for i in order]

    def lam(self) -> tuple[float, float] | None:
        """Current mixing weights, or None (memory empty / not a pointer)."""
        out = self.last
        if out is None or out.lam is None or not out.had_memory[0]:
            return None
        return float(out.lam.value[0, 0]), float(out.lam.value[0, 1])

    def clone(self) -> "DecodeState":
        twin = object.__new__(DecodeState)
        twin.model = self.model
        twin.vocab = self.vocab
        twin.is_identifier = self.is_identifier
        twin.leaves = self.leaves
        twin.state = self.model.detach_state(self.state)
        twin.seen_ids = set(self.seen_ids)
        twin.slot_terms = list(self.slot_terms)
        twin.last = self.last
        return twin


def suggest(model: Model, vocab: Vocabulary, context_ids, m: int,
            beam: int = 1) -> Suggestion:
    """Most likely next-m-token continuation under length-m beam search.

    beam=1 is the greedy argmax chain. Ranking is by joint natural-log
    probability; all ties break toward the smaller token id.
    """
    context_ids = list(context_ids)
    if not context_ids:
        raise ValueError("context must be nonempty")
    if m < 1 or beam < 1:
        raise ValueError("m and beam width must be >= 1")
    root = DecodeState(model, vocab)
    for token_id in context_ids:
        root.feed_id(int(token_id))

    hyps: list[tuple[float, tuple[int, ...], DecodeState]] = [(0.0, (), root)]
    for _ in range(m):
        candidates: list[tuple[float, tuple[int, ...], DecodeState, int]] = []
        for logprob, ids, session in hyps:
            dist = session.distribution().astype(np.float64)
            order = np.argsort(-dist, kind="stable")[:beam]
            for token_id in order:
                token_id = int(token_id)
                step_lp = math.log(dist[token_id]) if dist[token_id] > 0 else -math.inf
                candidates.append((logprob + step_lp, ids + (token_id,),
                                   session, token_id))
        # Joint log-prob descending; equal scores fall back to the
        # lexicographically smaller token sequence.
        candidates.sort(key=lambda c: (-c[0], c[1]))
        survivors = candidates[:beam]
        hyps = []
        for logprob, ids, session, token_id in survivors:
            child = session.clone()
            child.feed_id(token_id)
            hyps.append((logprob, ids, child))
    best_lp, best_ids, _ = hyps[0]
    return Suggestion(
        ids=best_ids,
        terms=tuple(vocab.id_to_term[i] for i in best_ids),
        logprob=best_lp,
    )


def trace(model: Model, vocab: Vocabulary, context_ids) -> list[TraceRecord]:
    """Per-token λ/attention/top-5 records over a context (pointer model)."""
    if model.config.arch != "pointer":
        raise ValueError("trace requires a pointer model")
    session = DecodeState(model, vocab)
    records: list[TraceRecord] = []
    for position, token_id in enumerate(context_ids):
        token_id = int(token_id)
        state_before = session.state
        slot_order = state_before.slot_order(0)
        slot_terms_before = list(session.slot_terms)
        out = session.feed_id(token_id)
        slots: list[tuple[str, float]] = []
        if out.alpha is not None and out.had_memory[0]:
            alpha = out.alpha.value[0]
            slots = [(slot_terms_before[j], float(alpha[j])) for j in slot_order]
        lam = None
        if out.lam is not None and out.had_memory[0]:
            lam = (float(out.lam.value[0, 0]), float(out.lam.value[0, 1]))
        records.append(TraceRecord(
            position=position,
            term=vocab.id_to_term[token_id],
            lam=lam,
            slots=slots,
            top5=session.top_k(5),
        ))
    return records
