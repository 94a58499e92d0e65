"""Three next-token models over normalized code streams.

All share one LSTM layer. "lstm" projects its output straight to the
vocabulary. "attention" attends over a ring of the last `window` LSTM
outputs and mixes the context vector into the output head. "pointer"
keeps a memory of LSTM outputs captured when identifiers were
introduced, attends over it, scatters the attention weights onto the
introduced token ids, and lets a small controller interpolate between
that copy distribution and the ordinary softmax head.

Steps are batched over lanes. Each lane's memory bookkeeping (which
slots are filled, which token id sits where, where the next write
lands) lives in plain integer arrays on the State; only the slot
vectors themselves participate in the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .. import tensor
from ..tensor import Var

ARCHITECTURES = ("lstm", "attention", "pointer")

# Additive score mask for unfilled slots. exp(-1e9) underflows to an
# exact zero in both float32 and float64, so masked slots get exactly
# zero attention, not merely a small amount.
NEG_LOGIT = -1e9


class EmptyMemory(ValueError):
    """attend() was called with no filled slots anywhere."""


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    vocab_size: int
    k: int = 200
    window: int = 20  # attention span / identifier memory capacity
    scatter_c: float = 1000.0
    dropout: float = 0.1

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.vocab_size < 1 or self.k < 1 or self.window < 1:
            raise ValueError("vocab_size, k and window must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class State:
    """Recurrent state for one batch of lanes."""

    h: Var  # [B, k]
    c: Var  # [B, k]
    mem: Var | None = None  # [B, K, k] slot vectors
    mem_valid: np.ndarray | None = None  # [B, K] bool
    mem_ids: np.ndarray | None = None  # [B, K] int32, pointer arch only
    mem_cursor: np.ndarray | None = None  # [B] next slot to overwrite
    mem_writes: np.ndarray | None = None  # [B] total writes, for slot age

    @property
    def batch_size(self) -> int:
        return self.h.shape[0]

    def slot_order(self, lane: int) -> list[int]:
        """Filled slot indices of one lane, oldest first."""
        if self.mem_valid is None:
            return []
        k = self.mem_valid.shape[1]
        writes = int(self.mem_writes[lane])
        if writes <= k:
            return [j for j in range(writes)]
        cursor = int(self.mem_cursor[lane])
        return [(cursor + j) % k for j in range(k)]


@dataclass
class StepOutput:
    """Everything one step emits: the prediction and its ingredients."""

    hidden: Var  # vector feeding the output head (h, or n for attention)
    logits: Var | None = None  # [B, V]; softmax heads only
    probs: Var | None = None  # [B, V]; the pointer's mixed distribution
    alpha: Var | None = None  # [B, K] attention over slots, when attended
    lam: Var | None = None  # [B, 2] effective mixing weights (pointer)
    lm_probs: Var | None = None  # [B, V] pointer LM branch before mixing
    copy_probs: Var | None = None  # [B, V] pointer copy branch before mixing
    had_memory: np.ndarray | None = None  # [B] lanes that attended

    def distribution(self) -> Var:
        if self.probs is not None:
            return self.probs
        return tensor.softmax(self.logits)


def init_params(config: ModelConfig, seed: int = 0, dtype=tensor.DEFAULT_DTYPE) -> tensor.Params:
    """Uniform(-0.05, 0.05) everywhere except the forget-gate bias (1.0)."""
    rng = np.random.default_rng(seed)
    k, v = config.k, config.vocab_size
    p = tensor.Params(dtype=dtype)
    p.add_uniform("embed", (v, k), rng)
    p.add_uniform("lstm_wx", (k, 4 * k), rng)
    p.add_uniform("lstm_wh", (k, 4 * k), rng)
    bias = rng.uniform(-0.05, 0.05, size=4 * k)
    bias[k : 2 * k] = 1.0
    p.add("lstm_b", bias)
    p.add_uniform("out_w", (k, v), rng)
    p.add_uniform("out_b", (v,), rng)
    if config.arch in ("attention", "pointer"):
        p.add_uniform("att_wm", (k, k), rng)
        p.add_uniform("att_wh", (k, k), rng)
        p.add_uniform("att_score", (k,), rng)
    if config.arch == "attention":
        p.add_uniform("att_combine", (2 * k, k), rng)
    if config.arch == "pointer":
        p.add_uniform("ctrl_w", (3 * k, 2), rng)
        p.add_uniform("ctrl_b", (2,), rng)
    return p


def _attend_math(leaves: Mapping[str, Var], mem: Var, valid: np.ndarray, h: Var):
    """Scores over slots, masked softmax, weighted context vector."""
    n_lanes, n_slots, width = mem.shape
    proj_m = tensor.matmul(mem, leaves["att_wm"])  # [B, K, k]
    proj_h = tensor.reshape(tensor.matmul(h, leaves["att_wh"]), (n_lanes, 1, width))
    gate = tensor.tanh(tensor.add(proj_m, proj_h))
    scores = tensor.reshape(
        tensor.matmul(gate, tensor.reshape(leaves["att_score"], (width, 1))),
        (n_lanes, n_slots),
    )
    mask = np.where(valid, 0.0, NEG_LOGIT).astype(scores.dtype)
    alpha = tensor.softmax(tensor.cadd(scores, mask))
    ctx = tensor.reshape(
        tensor.matmul(tensor.reshape(alpha, (n_lanes, 1, n_slots)), mem),
        (n_lanes, width),
    )
    return alpha, ctx


def attend(leaves: Mapping[str, Var], mem: Var, valid: np.ndarray, h: Var):
    """Attention over filled slots. Raises EmptyMemory when none exist.

    Batched callers with partially empty lanes must mask the results
    themselves (Model.step pins those lanes to the LM branch).
    """
    if not np.asarray(valid).any():
        raise EmptyMemory("no filled memory slots")
    return _attend_math(leaves, mem, valid, h)


class Model:
    def __init__(self, config: ModelConfig, params: tensor.Params | None = None,
                 seed: int = 0, dtype=tensor.DEFAULT_DTYPE):
        self.config = config
        self.params = params if params is not None else init_params(config, seed, dtype)

    @property
    def dtype(self):
        return self.params.dtype

    def begin(self) -> dict[str, Var]:
        return self.params.begin()

    def fresh_state(self, batch_size: int) -> State:
        cfg = self.config
        zeros = lambda *shape: Var(np.zeros(shape, dtype=self.dtype))
        state = State(h=zeros(batch_size, cfg.k), c=zeros(batch_size, cfg.k))
        if cfg.arch != "lstm":
            state.mem = zeros(batch_size, cfg.window, cfg.k)
            state.mem_valid = np.zeros((batch_size, cfg.window), dtype=bool)
            state.mem_cursor = np.zeros(batch_size, dtype=np.int64)
            state.mem_writes = np.zeros(batch_size, dtype=np.int64)
            if cfg.arch == "pointer":
                state.mem_ids = np.zeros((batch_size, cfg.window), dtype=np.int32)
        return state

    def detach_state(self, state: State) -> State:
        """Cut the graph: same numbers, fresh leaves. TBPTT boundary."""
        return State(
            h=Var(state.h.value),
            c=Var(state.c.value),
            mem=None if state.mem is None else Var(state.mem.value),
            mem_valid=None if state.mem_valid is None else state.mem_valid.copy(),
            mem_ids=None if state.mem_ids is None else state.mem_ids.copy(),
            mem_cursor=None if state.mem_cursor is None else state.mem_cursor.copy(),
            mem_writes=None if state.mem_writes is None else state.mem_writes.copy(),
        )

    def reset_lanes(self, state: State, which: np.ndarray) -> State:
        """Zero the recurrent state and empty the memory of chosen lanes."""
        which = np.asarray(which, dtype=bool)
        if not which.any():
            return state
        keep = (~which).astype(self.dtype)[:, None]
        new = replace(state, h=tensor.cmul(state.h, keep), c=tensor.cmul(state.c, keep))
        if state.mem is not None:
            # Stale slot vectors stay in the graph but are never read:
            # attention masks them and writes overwrite them.
            new.mem_valid = state.mem_valid.copy()
            new.mem_valid[which] = False
            new.mem_cursor = state.mem_cursor.copy()
            new.mem_cursor[which] = 0
            new.mem_writes = state.mem_writes.copy()
            new.mem_writes[which] = 0
            if state.mem_ids is not None:
                new.mem_ids = state.mem_ids.copy()
                new.mem_ids[which] = 0
        return new

    def step(self, leaves: Mapping[str, Var], state: State, ids: np.ndarray,
             intro: np.ndarray | None = None, train: bool = False,
             rng: np.random.Generator | None = None) -> tuple[StepOutput, State]:
        """Process one input token per lane; emit the next-token prediction.

        intro flags which lanes' input token introduces an identifier
        (pointer arch only). Memory updates happen after the output is
        computed, so a step never attends to its own input.
        """
        cfg = self.config
        ids = np.asarray(ids)
        x = tensor.rowselect(leaves["embed"], ids)
        x = tensor.dropout(x, cfg.dropout, rng=rng, train=train)
        h, c = self._lstm(leaves, x, state.h, state.c)

        if cfg.arch == "lstm":
            logits = tensor.add(tensor.matmul(h, leaves["out_w"]), leaves["out_b"])
            return StepOutput(hidden=h, logits=logits), State(h=h, c=c)

        has_mem = state.mem_valid.any(axis=1)
        if cfg.arch == "attention":
            out = self._attention_head(leaves, state, h, has_mem)
            new_state = self._write_memory(state, h, c,
                                           write=np.ones(len(ids), dtype=bool))
            return out, new_state

        out = self._pointer_head(leaves, state, h, x, has_mem)
        write = np.zeros(len(ids), dtype=bool) if intro is None else np.asarray(intro, dtype=bool)
        new_state = self._write_memory(state, h, c, write=write, ids=ids)
        return out, new_state

    # ------------------------------------------------------------ internals

    def _lstm(self, leaves, x, h_prev, c_prev):
        k = self.config.k
        gates = tensor.add(
            tensor.add(tensor.matmul(x, leaves["lstm_wx"]),
                       tensor.matmul(h_prev, leaves["lstm_wh"])),
            leaves["lstm_b"],
        )
        i = tensor.sigmoid(tensor.slice_last(gates, 0, k))
        f = tensor.sigmoid(tensor.slice_last(gates, k, 2 * k))
        g = tensor.tanh(tensor.slice_last(gates, 2 * k, 3 * k))
        o = tensor.sigmoid(tensor.slice_last(gates, 3 * k, 4 * k))
        c = tensor.add(tensor.mul(f, c_prev), tensor.mul(i, g))
        h = tensor.mul(o, tensor.tanh(c))
        return h, c

    def _attention_head(self, leaves, state, h, has_mem):
        n_lanes = h.shape[0]
        if has_mem.any():
            alpha, ctx = _attend_math(leaves, state.mem, state.mem_valid, h)
            # Lanes with an empty window get a zero context vector, not
            # an average over stale slots.
            ctx = tensor.cmul(ctx, has_mem.astype(self.dtype)[:, None])
        else:
            alpha = None
            ctx = Var(np.zeros((n_lanes, self.config.k), dtype=self.dtype))
        combined = tensor.tanh(
            tensor.matmul(tensor.concat([h, ctx]), leaves["att_combine"])
        )
        logits = tensor.add(tensor.matmul(combined, leaves["out_w"]), leaves["out_b"])
        return StepOutput(hidden=combined, logits=logits, alpha=alpha,
                          had_memory=has_mem.copy())

    def _pointer_head(self, leaves, state, h, x, has_mem):
        cfg = self.config
        lm_logits = tensor.add(tensor.matmul(h, leaves["out_w"]), leaves["out_b"])
        y = tensor.softmax(lm_logits)
        if not has_mem.any():
            return StepOutput(hidden=h, logits=lm_logits, probs=y, lm_probs=y,
                              had_memory=has_mem.copy())
        alpha, ctx = _attend_math(leaves, state.mem, state.mem_valid, h)
        ctx = tensor.cmul(ctx, has_mem.astype(self.dtype)[:, None])
        copy_dist = tensor.softmax(
            tensor.scatter_logits(alpha, state.mem_ids, state.mem_valid,
                                  cfg.vocab_size, cfg.scatter_c)
        )
        lam_logits = tensor.add(
            tensor.matmul(tensor.concat([h, x, ctx]), leaves["ctrl_w"]),
            leaves["ctrl_b"],
        )
        lam = tensor.softmax(lam_logits)
        # Pinning empty lanes to the LM branch: a softmax over an
        # all-masked score row would be uniform, which is meaningless.
        pin = Var(np.array([[1.0, 0.0]], dtype=self.dtype))
        lam = tensor.where_const(has_mem[:, None], lam, pin)
        mixed = tensor.scalar_mix(y, copy_dist, lam)
        return StepOutput(hidden=h, logits=lm_logits, probs=mixed, alpha=alpha,
                          lam=lam, lm_probs=y, copy_probs=copy_dist,
                          had_memory=has_mem.copy())

    def _write_memory(self, state, h, c, write, ids=None):
        new = State(h=h, c=c, mem=state.mem, mem_valid=state.mem_valid,
                    mem_ids=state.mem_ids, mem_cursor=state.mem_cursor,
                    mem_writes=state.mem_writes)
        if not write.any():
            return new
        cursor = state.mem_cursor
        new.mem = tensor.scatter_rows(state.mem, h, write, cursor)
        lanes = np.nonzero(write)[0]
        new.mem_valid = state.mem_valid.copy()
        new.mem_valid[lanes, cursor[lanes]] = True
        new.mem_cursor = state.mem_cursor.copy()
        new.mem_cursor[lanes] = (cursor[lanes] + 1) % self.config.window
        new.mem_writes = state.mem_writes.copy()
        new.mem_writes[lanes] += 1
        if self.config.arch == "pointer":
            new.mem_ids = state.mem_ids.copy()
            new.mem_ids[lanes, cursor[lanes]] = ids[lanes]
        return new
