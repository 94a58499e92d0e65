"""SGD with truncated backprop through time.

Files are packed into batch lanes (corpus.BatchStream); the recurrent
state carries across segment boundaries but gradients do not: each
segment starts from detached state and fresh parameter leaves. Within
a segment, lanes reset where a new file begins.

The loss is the mean NLL over predicted positions. Softmax-head models
(lstm, attention) compute it from logits, optionally with a sampled
softmax; the pointer model's output is already a probability vector,
so its loss starts from probabilities and sampling is unavailable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .. import tensor
from ..corpus import BatchStream, EncodedFile, Segment
from .models import Model


class DivergedLoss(RuntimeError):
    """Training loss left the finite range; lower the learning rate."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 30
    unroll: int = 50
    lr: float = 0.7
    lr_decay: float = 0.9
    clip: float = 5.0
    seed: int = 0
    sampled_softmax: int | None = None  # negatives per segment; softmax heads only

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("need lr > 0 and 0 < lr_decay <= 1")
        if self.clip <= 0:
            raise ValueError("clip must be positive")


@dataclass(frozen=True)
class EpochStats:
    epoch: int  # 1-based
    loss: float  # mean training NLL per predicted token
    lr: float
    seconds: float


def segment_loss(model: Model, leaves, state, seg: Segment, *,
                 train: bool = False,
                 dropout_rng: np.random.Generator | None = None,
                 sample_size: int | None = None,
                 sample_rng: np.random.Generator | None = None):
    """Run one segment; return (loss Var or None, n_predictions, state).

    loss is None when the segment holds no predicted positions (the
    zero-padded tail of a ragged batch).
    """
    n_lanes, length = seg.inputs.shape
    outputs: list[tensor.Var] = []
    for t in range(length):
        state = model.reset_lanes(state, seg.reset[:, t])
        out, state = model.step(leaves, state, seg.inputs[:, t],
                                intro=seg.intro[:, t], train=train,
                                rng=dropout_rng)
        if model.config.arch == "pointer":
            outputs.append(out.distribution())
        elif sample_size is not None:
            outputs.append(out.hidden)
        else:
            outputs.append(out.logits)
    n_pred = int(seg.mask.sum())
    if n_pred == 0:
        return None, 0, state
    stacked = tensor.concat(outputs, axis=0)  # step-major [L*B, ...]
    targets = seg.targets.T.reshape(-1)
    mask = seg.mask.T.reshape(-1)
    if model.config.arch == "pointer":
        loss = tensor.masked_mean_nll(stacked, targets, mask)
    elif sample_size is not None:
        loss = tensor.sampled_softmax_loss(
            leaves["out_w"], leaves["out_b"], stacked, targets,
            sample_size, sample_rng, mask=mask,
        )
    else:
        loss = tensor.cross_entropy_logits(stacked, targets, mask=mask)
    return loss, n_pred, state


def train(model: Model, files: list[EncodedFile], cfg: TrainConfig,
          on_epoch=None) -> list[EpochStats]:
    """Train in place for cfg.epochs; returns per-epoch stats.

    on_epoch, when given, is called with each EpochStats as it is
    produced (progress reporting).
    """
    if cfg.sampled_softmax is not None and model.config.arch == "pointer":
        raise ValueError("sampled softmax needs a single softmax head; "
                         "the mixture output has none")
    stream = BatchStream(files, cfg.batch_size, cfg.unroll)
    if stream.n_predictions == 0:
        raise ValueError("nothing to predict: every file has at most one token")
    dropout_rng = np.random.default_rng([cfg.seed, 0x0d])
    sample_rng = np.random.default_rng([cfg.seed, 0x5a])
    lr = cfg.lr
    history: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        state = model.fresh_state(cfg.batch_size)
        total_nll = 0.0
        total_pred = 0
        for seg_index, seg in enumerate(stream):
            state = model.detach_state(state)
            leaves = model.params.begin()
            loss, n_pred, state = segment_loss(
                model, leaves, state, seg, train=True,
                dropout_rng=dropout_rng,
                sample_size=cfg.sampled_softmax, sample_rng=sample_rng,
            )
            if loss is None:
                continue
            value = float(loss.value)
            if not math.isfinite(value):
                raise DivergedLoss(
                    f"loss became {value} at epoch {epoch}, segment "
                    f"{seg_index} (lr {lr:.4g}); lower the learning rate"
                )
            loss.backward()
            grads = model.params.grads()
            tensor.clip_by_global_norm(grads, cfg.clip)
            tensor.sgd_step(model.params.arrays, grads, lr)
            total_nll += value * n_pred
            total_pred += n_pred
        stats = EpochStats(
            epoch=epoch,
            loss=total_nll / total_pred,
            lr=lr,
            seconds=time.perf_counter() - started,
        )
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
        lr = tensor.decay_lr(lr, cfg.lr_decay)
    return history


def evaluate_nll(model: Model, files: list[EncodedFile], *,
                 batch_size: int = 16,
                 segment_len: int | None = None) -> tuple[float, int]:
    """Total NLL (float64) and prediction count, dropout off.

    The state detaches after every step, so no graph accumulates and
    the result is independent of segment_len: segmentation only
    changes where padding falls, never which positions are scored.
    """
    files = [f for f in files if len(f) > 0]
    if not files:
        return 0.0, 0
    batch_size = min(batch_size, len(files))
    stream = BatchStream(files, batch_size, segment_len or max(len(f) for f in files))
    leaves = model.params.begin()
    state = model.fresh_state(batch_size)
    total = 0.0
    count = 0
    for seg in stream:
        n_lanes, length = seg.inputs.shape
        for t in range(length):
            if not seg.mask[:, t].any() and not seg.reset[:, t].any():
                continue
            state = model.reset_lanes(state, seg.reset[:, t])
            out, state = model.step(leaves, state, seg.inputs[:, t],
                                    intro=seg.intro[:, t])
            state = model.detach_state(state)
            rows = np.nonzero(seg.mask[:, t])[0]
            if rows.size:
                probs = out.distribution().value[rows, seg.targets[rows, t]]
                total += float(-np.log(probs.astype(np.float64)).sum())
                count += int(rows.size)
    return total, count


def perplexity(model: Model, files: list[EncodedFile], *,
               batch_size: int = 16, segment_len: int | None = None) -> float:
    total, count = evaluate_nll(model, files, batch_size=batch_size,
                                segment_len=segment_len)
    if count == 0:
        raise ValueError("no positions to score")
    return math.exp(total / count)
