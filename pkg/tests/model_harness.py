"""Shared builders for the model unit tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from sourcelm.corpus import BatchStream, EncodedFile, Segment, Vocabulary
from sourcelm.neural import Model, ModelConfig, segment_loss

import fd_util

GRADCHECK_DIMS = dict(k=8, vocab_size=20, length=12, window=3)

# Next-token transition matrix realized by hand_built_markov_model.
# Designed so the greedy chain from token 0 (1, 0, 1: p=0.10285) loses
# to 2, 2, 2 (p=0.324), forcing beam search to keep the runner-up alive.
MARKOV = np.array([
    [0.05, 0.55, 0.40],
    [0.34, 0.33, 0.33],
    [0.05, 0.05, 0.90],
])


def hand_built_markov_model() -> tuple[Model, Vocabulary]:
    """LSTM whose output distribution is MARKOV[last input] (± ~1e-12).

    One-hot embeddings; input and output gates saturated open, forget
    gate saturated shut (so history dies each step); the cell gate
    copies the one-hot input. The output matrix rescales the single
    active h component onto the log-probability rows.
    """
    cfg = ModelConfig(arch="lstm", vocab_size=3, k=3, dropout=0.0)
    model = Model(cfg, dtype=np.float64, seed=0)
    arrays = model.params.arrays
    sat, gain = 30.0, 3.0
    sig = 1.0 / (1.0 + np.exp(-sat))
    arrays["embed"][:] = np.eye(3)
    arrays["lstm_wx"][:] = 0.0
    arrays["lstm_wx"][:, 6:9] = gain * np.eye(3)  # cell-gate slice
    arrays["lstm_wh"][:] = 0.0
    bias = np.zeros(12)
    bias[0:3] = sat  # input gate open
    bias[3:6] = -sat  # forget gate shut
    bias[9:12] = sat  # output gate open
    arrays["lstm_b"][:] = bias
    h_active = sig * np.tanh(sig * np.tanh(gain))
    arrays["out_w"][:] = np.log(MARKOV) / h_active
    arrays["out_b"][:] = 0.0
    vocab = Vocabulary(id_to_term=["$OOV$", "$NUM$", "x"], counts=[1, 1, 1])
    return model, vocab


def tiny_model(arch: str, *, k: int = 8, vocab_size: int = 20, window: int = 3,
               seed: int = 7, dtype=np.float64, dropout: float = 0.0,
               scatter_c: float = 1000.0) -> Model:
    cfg = ModelConfig(arch=arch, vocab_size=vocab_size, k=k, window=window,
                      dropout=dropout, scatter_c=scatter_c)
    return Model(cfg, seed=seed, dtype=dtype)


def random_file(rng: np.random.Generator, vocab_size: int, length: int,
                intro_count: int) -> EncodedFile:
    ids = [int(i) for i in rng.integers(0, vocab_size, size=length)]
    intro = {int(p) for p in rng.choice(length, size=intro_count, replace=False)}
    return EncodedFile(ids=ids, intro=intro)


def single_segment(file: EncodedFile) -> Segment:
    return next(iter(BatchStream([file], batch_size=1, unroll=len(file))))


def gradcheck_model(arch: str, *, seed: int = 7, **dims) -> float:
    """Worst relative gradient error of a full training-path loss.

    The step is larger than the op-level tests use: a 12-step
    recurrence leaves some weights with gradients near 1e-8, where the
    roundoff term of a central difference (~eps_mach/epsilon) dominates.
    At 3e-5 that noise sits near 1e-5 relative while the truncation
    term is still negligible, so a genuine gradient bug stands out.
    """
    spec = dict(GRADCHECK_DIMS, **dims)
    model = tiny_model(arch, k=spec["k"], vocab_size=spec["vocab_size"],
                       window=spec["window"], seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    file = random_file(rng, spec["vocab_size"], spec["length"],
                       intro_count=spec["length"] // 3)
    seg = single_segment(file)

    def build(leaves):
        loss, _, _ = segment_loss(model, leaves, model.fresh_state(1), seg)
        return loss

    return fd_util.check_gradients(model.params, build, epsilon=3e-5)


def exhaustive_best(model: Model, vocab, context_ids, m: int):
    """Brute-force best m-token continuation over all V**m candidates.

    Independent oracle for the beam search: same tie rule (equal joint
    log-probability falls to the smaller token sequence), no pruning.
    Returns (logprob, ids tuple).
    """
    import itertools
    import math

    from sourcelm.neural import DecodeState

    root = DecodeState(model, vocab)
    for token_id in context_ids:
        root.feed_id(int(token_id))
    best = None
    for seq in itertools.product(range(model.config.vocab_size), repeat=m):
        session = root.clone()
        logprob = 0.0
        for token_id in seq:
            dist = session.distribution().astype(np.float64)
            p = float(dist[token_id])
            logprob += math.log(p) if p > 0 else -math.inf
            session.feed_id(token_id)
        if best is None or logprob > best[0] or (logprob == best[0] and seq < best[1]):
            best = (logprob, seq)
    return best


def audit_distributions(model: Model, n_steps: int, seed: int = 0,
                        batch: int = 4) -> dict[str, float]:
    """Random-walk the model; worst-case deviations of the output invariants.

    Emits at least n_steps distributions (batch lanes per step) with
    random inputs, intro flags, and occasional lane resets. Returns:
      sum_dev      worst |sum(dist) - 1|
      mix_dev      worst |y* - (lam1*y + lam2*i)| on lanes with memory
      absent_mass  worst copy-branch mass on ids absent from the memory
    """
    rng = np.random.default_rng(seed)
    vocab_size = model.config.vocab_size
    leaves = model.begin()
    state = model.fresh_state(batch)
    worst = {"sum_dev": 0.0, "mix_dev": 0.0, "absent_mass": 0.0}
    emitted = 0
    while emitted < n_steps:
        ids = rng.integers(0, vocab_size, size=batch)
        intro = rng.random(batch) < 0.3
        state = model.reset_lanes(state, rng.random(batch) < 0.02)
        ids_before = None if state.mem_ids is None else state.mem_ids.copy()
        valid_before = None if state.mem_valid is None else state.mem_valid.copy()
        out, state = model.step(leaves, state, ids, intro=intro)
        state = model.detach_state(state)  # keep the walk O(1) in memory
        dist = out.distribution().value
        worst["sum_dev"] = max(worst["sum_dev"],
                               float(np.abs(dist.sum(axis=1) - 1.0).max()))
        if model.config.arch == "pointer" and out.lam is not None:
            lanes = np.nonzero(out.had_memory)[0]
            lam = out.lam.value
            mix = (lam[:, :1] * out.lm_probs.value
                   + lam[:, 1:] * out.copy_probs.value)
            if lanes.size:
                worst["mix_dev"] = max(
                    worst["mix_dev"],
                    float(np.abs(mix[lanes] - dist[lanes]).max()),
                )
            for b in lanes:
                absent = np.ones(vocab_size, dtype=bool)
                absent[ids_before[b][valid_before[b]]] = False
                worst["absent_mass"] = max(
                    worst["absent_mass"],
                    float(out.copy_probs.value[b][absent].sum()),
                )
        emitted += batch
    return worst
