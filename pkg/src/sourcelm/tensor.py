"""Reverse-mode autodiff over numpy arrays.

Exactly the operations the three model architectures need, nothing
more: no broadcasting rules beyond what those models use, no fusion,
no views. A forward pass builds a DAG of Var nodes; backward() on a
scalar loss walks it once in reverse topological order.

Training math runs in float32 by default. Gradient checks construct
their models in float64, where central finite differences are
trustworthy to around 1e-7 relative.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeMismatch(ValueError):
    """Operands cannot be combined under the declared shapes."""


class Var:
    """A node in the computation graph: a value and how to backprop it."""

    __slots__ = ("value", "grad", "_parents", "_backprop")

    def __init__(self, value, parents=(), backprop=None):
        self.value = np.asarray(value)
        self.grad = None
        self._parents = parents
        self._backprop = backprop

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable Var."""
        if self.value.size != 1:
            raise ShapeMismatch(f"backward() needs a scalar, got shape {self.shape}")
        order = _toposort(self)
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backprop is not None:
                node._backprop(node.grad)


def _toposort(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to the given operand shape after broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a_shape, b_shape, op: str) -> None:
    try:
        np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a_shape} and {b_shape} do not broadcast") from None


# ---------------------------------------------------------------- arithmetic


def add(a: Var, b: Var) -> Var:
    _check_broadcast(a.shape, b.shape, "add")
    out = Var(a.value + b.value, (a, b))

    def backprop(g):
        a.grad += _unbroadcast(g, a.shape)
        b.grad += _unbroadcast(g, b.shape)

    out._backprop = backprop
    return out


def sub(a: Var, b: Var) -> Var:
    _check_broadcast(a.shape, b.shape, "sub")
    out = Var(a.value - b.value, (a, b))

    def backprop(g):
        a.grad += _unbroadcast(g, a.shape)
        b.grad -= _unbroadcast(g, b.shape)

    out._backprop = backprop
    return out


def mul(a: Var, b: Var) -> Var:
    _check_broadcast(a.shape, b.shape, "mul")
    out = Var(a.value * b.value, (a, b))

    def backprop(g):
        a.grad += _unbroadcast(g * b.value, a.shape)
        b.grad += _unbroadcast(g * a.value, b.shape)

    out._backprop = backprop
    return out


def cmul(a: Var, c) -> Var:
    """Multiply by a constant scalar or array; nothing flows into c."""
    c = np.asarray(c, dtype=a.dtype)
    _check_broadcast(a.shape, c.shape, "cmul")
    out = Var(a.value * c, (a,))

    def backprop(g):
        a.grad += _unbroadcast(g * c, a.shape)

    out._backprop = backprop
    return out


def cadd(a: Var, c) -> Var:
    """Add a constant scalar or array."""
    c = np.asarray(c, dtype=a.dtype)
    _check_broadcast(a.shape, c.shape, "cadd")
    out = Var(a.value + c, (a,))

    def backprop(g):
        a.grad += _unbroadcast(g, a.shape)

    out._backprop = backprop
    return out


def matmul(a: Var, b: Var) -> Var:
    """np.matmul semantics, including stacked (batch) operands."""
    if a.value.ndim < 1 or b.value.ndim < 2:
        raise ShapeMismatch(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out = Var(np.matmul(a.value, b.value), (a, b))

    def backprop(g):
        bt = np.swapaxes(b.value, -1, -2)
        at = np.swapaxes(a.value, -1, -2)
        if a.value.ndim == 1:
            a.grad += np.matmul(g, bt)
            b.grad += np.outer(a.value, g) if g.ndim == 1 else np.matmul(at, g)
            return
        ga = np.matmul(g, bt)
        gb = np.matmul(at, g)
        a.grad += _unbroadcast(ga, a.shape)
        b.grad += _unbroadcast(gb, b.shape)

    out._backprop = backprop
    return out


def concat(parts: Iterable[Var], axis: int = -1) -> Var:
    parts = list(parts)
    out = Var(np.concatenate([p.value for p in parts], axis=axis), tuple(parts))
    sizes = [p.shape[axis] for p in parts]

    def backprop(g):
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        for p, piece in zip(parts, pieces):
            p.grad += piece

    out._backprop = backprop
    return out


def slice_last(a: Var, start: int, stop: int) -> Var:
    """Slice along the final axis (gate splitting)."""
    out = Var(a.value[..., start:stop], (a,))

    def backprop(g):
        a.grad[..., start:stop] += g

    out._backprop = backprop
    return out


def reshape(a: Var, shape) -> Var:
    out = Var(a.value.reshape(shape), (a,))

    def backprop(g):
        a.grad += g.reshape(a.shape)

    out._backprop = backprop
    return out


def ssum(a: Var) -> Var:
    """Sum of all elements, as a scalar Var."""
    out = Var(np.asarray(a.value.sum(), dtype=a.dtype), (a,))

    def backprop(g):
        a.grad += g

    out._backprop = backprop
    return out


# ------------------------------------------------------------- nonlinearity


def tanh(a: Var) -> Var:
    y = np.tanh(a.value)
    out = Var(y, (a,))

    def backprop(g):
        a.grad += g * (1.0 - y * y)

    out._backprop = backprop
    return out


def sigmoid(a: Var) -> Var:
    y = np.empty_like(a.value)
    pos = a.value >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-a.value[pos]))
    ex = np.exp(a.value[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Var(y, (a,))

    def backprop(g):
        a.grad += g * y * (1.0 - y)

    out._backprop = backprop
    return out


def log(a: Var) -> Var:
    out = Var(np.log(a.value), (a,))

    def backprop(g):
        a.grad += g / a.value

    out._backprop = backprop
    return out


def softmax(a: Var, axis: int = -1) -> Var:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Var(y, (a,))

    def backprop(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        a.grad += (g - dot) * y

    out._backprop = backprop
    return out


# ------------------------------------------------------------------ lookups


def rowselect(table: Var, ids: np.ndarray) -> Var:
    """Embedding lookup: rows of table at integer ids (any id shape)."""
    ids = np.asarray(ids)
    out = Var(table.value[ids], (table,))

    def backprop(g):
        np.add.at(table.grad, ids, g)

    out._backprop = backprop
    return out


def pick(a: Var, ids: np.ndarray) -> Var:
    """One element per row of a 2-D array: a[r, ids[r]]."""
    if a.value.ndim != 2:
        raise ShapeMismatch(f"pick: need 2-D input, got {a.shape}")
    ids = np.asarray(ids)
    rows = np.arange(a.shape[0])
    out = Var(a.value[rows, ids], (a,))

    def backprop(g):
        np.add.at(a.grad, (rows, ids), g)

    out._backprop = backprop
    return out


def where_const(mask: np.ndarray, a: Var, b: Var) -> Var:
    """Elementwise select with a constant boolean mask."""
    mask = np.asarray(mask)
    _check_broadcast(a.shape, b.shape, "where_const")
    out = Var(np.where(mask, a.value, b.value), (a, b))

    def backprop(g):
        a.grad += _unbroadcast(np.where(mask, g, 0.0), a.shape)
        b.grad += _unbroadcast(np.where(mask, 0.0, g), b.shape)

    out._backprop = backprop
    return out


def dropout(a: Var, rate: float, rng: np.random.Generator | None = None,
            train: bool = False, mask: np.ndarray | None = None) -> Var:
    """Inverted dropout: scales kept units by 1/(1-rate) at train time.

    Eval mode (train=False) is the identity. A precomputed mask makes
    the op deterministic for finite-difference checks.
    """
    if not train or rate == 0.0:
        return a
    if mask is None:
        if rng is None:
            raise ValueError("dropout in train mode needs an rng or a mask")
        keep = (rng.random(a.shape) >= rate).astype(a.dtype)
        mask = keep / np.asarray(1.0 - rate, dtype=a.dtype)
    return cmul(a, mask)


# ------------------------------------------------------- model-specific ops


def scatter_rows(mem: Var, h: Var, write: np.ndarray, slots: np.ndarray) -> Var:
    """Write h[b] into mem[b, slots[b]] for lanes where write[b] is set.

    The overwritten slot's previous content receives no gradient; the
    new content routes gradient back to h. Lanes with write[b] False
    pass through untouched.
    """
    if mem.value.ndim != 3 or h.value.ndim != 2:
        raise ShapeMismatch(f"scatter_rows: got mem {mem.shape}, h {h.shape}")
    write = np.asarray(write, dtype=bool)
    slots = np.asarray(slots)
    lanes = np.nonzero(write)[0]
    value = mem.value.copy()
    value[lanes, slots[lanes]] = h.value[lanes]
    out = Var(value, (mem, h))

    def backprop(g):
        gm = g.copy()
        gm[lanes, slots[lanes]] = 0.0
        mem.grad += gm
        gh = np.zeros_like(h.value)
        gh[lanes] = g[lanes, slots[lanes]]
        h.grad += gh

    out._backprop = backprop
    return out


def scatter_logits(alpha: Var, mem_ids: np.ndarray, valid: np.ndarray,
                   vocab_size: int, c: float = 1000.0) -> Var:
    """Place attention weights at their token ids; -C everywhere else.

    Duplicate ids among the valid slots sum their weights before
    placement. Invalid slots are ignored entirely.
    """
    if alpha.value.ndim != 2:
        raise ShapeMismatch(f"scatter_logits: need [B,K] alpha, got {alpha.shape}")
    mem_ids = np.asarray(mem_ids)
    valid = np.asarray(valid, dtype=bool)
    n_lanes = alpha.shape[0]
    rows, cols = np.nonzero(valid)
    ids = mem_ids[rows, cols]
    summed = np.zeros((n_lanes, vocab_size), dtype=alpha.dtype)
    np.add.at(summed, (rows, ids), alpha.value[rows, cols])
    present = np.zeros((n_lanes, vocab_size), dtype=bool)
    present[rows, ids] = True
    value = np.where(present, summed, np.asarray(-c, dtype=alpha.dtype))
    out = Var(value, (alpha,))

    def backprop(g):
        ga = np.zeros_like(alpha.value)
        ga[rows, cols] = g[rows, ids]
        alpha.grad += ga

    out._backprop = backprop
    return out


def scalar_mix(y: Var, i: Var, lam: Var) -> Var:
    """Convex combination of two distributions: lam[:,0]*y + lam[:,1]*i."""
    if y.shape != i.shape or lam.value.ndim != 2 or lam.shape[1] != 2:
        raise ShapeMismatch(
            f"scalar_mix: got y {y.shape}, i {i.shape}, lam {lam.shape}"
        )
    l0 = lam.value[:, 0:1]
    l1 = lam.value[:, 1:2]
    out = Var(l0 * y.value + l1 * i.value, (y, i, lam))

    def backprop(g):
        y.grad += g * l0
        i.grad += g * l1
        lam.grad[:, 0] += (g * y.value).sum(axis=1)
        lam.grad[:, 1] += (g * i.value).sum(axis=1)

    out._backprop = backprop
    return out


def cross_entropy_logits(logits: Var, targets: np.ndarray,
                         mask: np.ndarray | None = None) -> Var:
    """Mean negative log-likelihood over unmasked rows, from raw logits.

    Fused log-softmax keeps float32 training stable. mask entries are
    0/1 weights; the mean divides by the number of unmasked rows.
    """
    if logits.value.ndim != 2:
        raise ShapeMismatch(f"cross_entropy_logits: need 2-D logits, got {logits.shape}")
    targets = np.asarray(targets)
    n_rows = logits.shape[0]
    if mask is None:
        mask = np.ones(n_rows, dtype=logits.dtype)
    else:
        mask = np.asarray(mask, dtype=logits.dtype)
    denom = mask.sum()
    if denom == 0:
        raise ValueError("cross_entropy_logits: all rows masked out")
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    rows = np.arange(n_rows)
    nll = np.log(z[:, 0]) - shifted[rows, targets]
    out = Var(np.asarray((nll * mask).sum() / denom, dtype=logits.dtype), (logits,))

    def backprop(g):
        gl = probs * mask[:, None]
        gl[rows, targets] -= mask
        logits.grad += g * gl / denom

    out._backprop = backprop
    return out


def masked_mean_nll(probs: Var, targets: np.ndarray, mask: np.ndarray) -> Var:
    """Mean -log p[target] over unmasked rows, from probabilities.

    The mixture model's output is already a probability vector, so its
    loss has to start from probabilities rather than logits.
    """
    mask = np.asarray(mask, dtype=probs.dtype)
    denom = mask.sum()
    if denom == 0:
        raise ValueError("masked_mean_nll: all rows masked out")
    picked = pick(probs, targets)
    # Masked-out rows can hold zero probability (padding); clamp them
    # to 1 so log() stays finite. Their gradient is killed by the mask.
    safe = where_const(mask > 0, picked, Var(np.ones_like(picked.value)))
    return cmul(ssum(cmul(log(safe), -mask)), 1.0 / denom)


# -------------------------------------------------------------- optimization


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float = 5.0) -> float:
    """Scale all gradients in place when their joint norm exceeds the cap.

    Returns the pre-clip norm.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
             lr: float) -> None:
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name, p in params.items():
        g = grads.get(name)
        if g is not None:
            p -= (lr * g).astype(p.dtype, copy=False)


def decay_lr(lr: float, factor: float = 0.9) -> float:
    return lr * factor


# --------------------------------------------------------------- parameters


class Params:
    """Named parameter arrays plus per-pass leaf Vars.

    begin() hands out fresh leaves sharing the stored arrays, so a
    forward pass reads current values and backward() leaves gradients
    on the leaf Vars, collected by grads().
    """

    def __init__(self, dtype=DEFAULT_DTYPE):
        self.dtype = np.dtype(dtype)
        self.arrays: dict[str, np.ndarray] = {}
        self._leaves: dict[str, Var] = {}

    def add(self, name: str, array: np.ndarray) -> None:
        if name in self.arrays:
            raise ValueError(f"duplicate parameter {name!r}")
        self.arrays[name] = np.ascontiguousarray(array, dtype=self.dtype)

    def add_uniform(self, name: str, shape, rng: np.random.Generator,
                    low: float = -0.05, high: float = 0.05) -> None:
        self.add(name, rng.uniform(low, high, size=shape))

    def begin(self) -> dict[str, Var]:
        self._leaves = {name: Var(arr) for name, arr in self.arrays.items()}
        return self._leaves

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: leaf.grad
            for name, leaf in self._leaves.items()
            if leaf.grad is not None
        }

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())


# ---------------------------------------------------------- sampled softmax


def log_uniform_mass(i: np.ndarray | int, vocab_size: int):
    """P(i) = log((i+2)/(i+1)) / log(V+1), the Zipf-ish proposal.

    Matches a frequency-sorted vocabulary, where small ids are common
    tokens and deserve most of the negative-sampling effort.
    """
    i = np.asarray(i, dtype=np.float64)
    return np.log((i + 2.0) / (i + 1.0)) / math.log(vocab_size + 1.0)


def log_uniform_sample(rng: np.random.Generator, vocab_size: int, n: int,
                       exclude: set[int] = frozenset()) -> np.ndarray:
    """n distinct ids drawn from the log-uniform proposal, skipping exclude.

    Inverse-CDF draw: u uniform in [0,1) maps to floor((V+1)^u) - 1.
    """
    if n > vocab_size - len(exclude):
        raise ValueError("not enough ids to sample from")
    chosen: list[int] = []
    seen = set(exclude)
    while len(chosen) < n:
        u = rng.random(size=2 * (n - len(chosen)) + 8)
        ids = np.floor(np.power(vocab_size + 1.0, u)).astype(np.int64) - 1
        for i in ids:
            i = int(i)
            if i < vocab_size and i not in seen:
                seen.add(i)
                chosen.append(i)
                if len(chosen) == n:
                    break
    return np.array(chosen, dtype=np.int64)


def sampled_softmax_loss(out_w: Var, out_b: Var, hidden: Var,
                         targets: np.ndarray, sample_size: int,
                         rng: np.random.Generator,
                         mask: np.ndarray | None = None,
                         candidates: np.ndarray | None = None) -> Var:
    """Cross-entropy over target columns plus sampled negatives.

    The candidate list is the batch's targets followed by sample_size
    distinct negatives that collide with none of them. Logits are
    corrected by subtracting log(expected proposal count), so the
    sampled loss estimates the full-softmax loss. Passing a frozen
    candidate array makes the op deterministic for gradient checks.
    """
    targets = np.asarray(targets)
    vocab_size = out_w.shape[1]
    if sample_size > vocab_size:
        raise ValueError(f"sample_size {sample_size} exceeds vocabulary {vocab_size}")
    if candidates is None:
        negatives = log_uniform_sample(rng, vocab_size, sample_size,
                                       exclude=set(int(t) for t in targets))
        candidates = np.concatenate([targets, negatives])
    else:
        candidates = np.asarray(candidates)
    cand_w = colselect(out_w, candidates)
    cand_b = gather1d(out_b, candidates)
    logits = add(matmul(hidden, cand_w), cand_b)
    expected = sample_size * log_uniform_mass(candidates, vocab_size)
    corrected = cadd(logits, -np.log(expected).astype(logits.dtype))
    labels = np.arange(len(targets))
    return cross_entropy_logits(corrected, labels, mask)


def colselect(a: Var, ids: np.ndarray) -> Var:
    """Columns of a 2-D array at integer ids."""
    ids = np.asarray(ids)
    out = Var(a.value[:, ids], (a,))

    def backprop(g):
        np.add.at(a.grad, (slice(None), ids), g)

    out._backprop = backprop
    return out


def gather1d(a: Var, ids: np.ndarray) -> Var:
    ids = np.asarray(ids)
    out = Var(a.value[ids], (a,))

    def backprop(g):
        np.add.at(a.grad, ids, g)

    out._backprop = backprop
    return out


# ------------------------------------------------------------- verification


def finite_difference_check(loss_fn: Callable[[], float],
                            params: Mapping[str, np.ndarray],
                            grads: Mapping[str, np.ndarray],
                            epsilon: float = 1e-5) -> dict[str, float]:
    """Max relative error of analytic vs central-difference gradients.

    loss_fn must rebuild the forward pass from the current parameter
    values on every call (parameters are perturbed in place). Use
    float64 parameters; float32 cannot resolve 1e-5 perturbations.
    Returns a per-parameter map of worst relative errors, where the
    relative error denominator is max(|analytic|, |numeric|, 1e-6).
    """
    errors: dict[str, float] = {}
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"finite_difference_check needs float64, {name} is {p.dtype}")
        analytic = grads[name]
        worst = 0.0
        flat = p.reshape(-1)
        aflat = np.asarray(analytic).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = loss_fn()
            flat[j] = orig - epsilon
            down = loss_fn()
            flat[j] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(aflat[j]), abs(numeric), 1e-6)
            worst = max(worst, abs(aflat[j] - numeric) / denom)
        errors[name] = worst
    return errors
