"""Vocabulary building, project splits, and batched training streams.

Normalized token streams become id sequences over a frequency-ordered
vocabulary with $OOV$ replacement for rare tokens.  Files are packed into
batch lanes that carry recurrent state across unroll segments, with reset
flags at file boundaries and intro flags at identifier introductions.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field

import numpy as np

from .pylex import TokenKind
from .pynorm import NormalizedFile

OOV_TOKEN = "$OOV$"
NUM_TOKEN = "$NUM$"
NEWLINE_TERM = "$NEWLINE$"
INDENT_TERM = "$INDENT$"
DEDENT_TERM = "$DEDENT$"

# vocabulary terms that count as anonymous identifiers for eval bucketing
IDENTIFIER_RE = re.compile(r"^(?:class|function|arg|var|attribute)\d+$")


class EmptyCorpus(ValueError):
    pass


class TooFewProjects(ValueError):
    pass


def token_term(token) -> str | None:
    """Vocabulary term for a normalized token; None for dropped kinds."""
    kind = token.kind
    if kind is TokenKind.NEWLINE:
        return NEWLINE_TERM
    if kind is TokenKind.INDENT:
        return INDENT_TERM
    if kind is TokenKind.DEDENT:
        return DEDENT_TERM
    if kind is TokenKind.ENDMARKER or kind is TokenKind.COMMENT:
        return None
    return token.text


def file_terms(nfile: NormalizedFile) -> tuple[list[str], set[int]]:
    """Term stream of a normalized file plus intro positions re-indexed to it."""
    terms: list[str] = []
    intro: set[int] = set()
    for i, tok in enumerate(nfile.tokens):
        term = token_term(tok)
        if term is None:
            continue
        if i in nfile.intro_positions:
            intro.add(len(terms))
        terms.append(term)
    return terms, intro


@dataclass
class Vocabulary:
    id_to_term: list[str]
    counts: list[int]
    term_to_id: dict[str, int] = field(init=False)
    oov_id: int = field(init=False)
    num_id: int = field(init=False)

    def __post_init__(self):
        self.term_to_id = {t: i for i, t in enumerate(self.id_to_term)}
        if len(self.term_to_id) != len(self.id_to_term):
            raise ValueError("duplicate terms in vocabulary")
        self.oov_id = self.term_to_id[OOV_TOKEN]
        self.num_id = self.term_to_id[NUM_TOKEN]

    def __len__(self) -> int:
        return len(self.id_to_term)

    def encode_term(self, term: str) -> int:
        return self.term_to_id.get(term, self.oov_id)

    def id_is_identifier(self) -> np.ndarray:
        """Bool array over ids: term is an anonymous identifier name."""
        flags = np.zeros(len(self.id_to_term), dtype=bool)
        for i, term in enumerate(self.id_to_term):
            if IDENTIFIER_RE.match(term):
                flags[i] = True
        return flags

    def digest(self) -> str:
        h = hashlib.sha256()
        for term, count in zip(self.id_to_term, self.counts):
            h.update(f"{term}\t{count}\n".encode("utf-8"))
        return h.hexdigest()[:16]


def build_vocab(files: list[NormalizedFile], min_count: int = 5) -> Vocabulary:
    """Frequency-ordered vocabulary; terms rarer than min_count become $OOV$."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    total = 0
    for nf in files:
        terms, _ = file_terms(nf)
        total += len(terms)
        for term in terms:
            counts[term] = counts.get(term, 0) + 1
    if total == 0:
        raise EmptyCorpus("no tokens in corpus")
    kept = {t: c for t, c in counts.items() if c >= min_count}
    dropped = sum(c for t, c in counts.items() if c < min_count)
    kept[OOV_TOKEN] = kept.get(OOV_TOKEN, 0) + dropped
    kept.setdefault(NUM_TOKEN, 0)
    ordered = sorted(kept.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([t for t, _ in ordered], [c for _, c in ordered])


def write_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, (term, count) in enumerate(zip(vocab.id_to_term, vocab.counts)):
            fh.write(f"{term}\t{i}\t{count}\n")


def read_vocab(path) -> Vocabulary:
    terms: list[str] = []
    counts: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            term, idx, count = line.split("\t")
            if int(idx) != len(terms):
                raise ValueError(f"non-dense vocabulary ids in {path}")
            terms.append(term)
            counts.append(int(count))
    return Vocabulary(terms, counts)


@dataclass
class EncodedFile:
    ids: list[int]
    intro: set[int]  # positions whose token introduces an identifier

    def __len__(self) -> int:
        return len(self.ids)


def encode_file(nfile: NormalizedFile, vocab: Vocabulary) -> EncodedFile:
    terms, intro_positions = file_terms(nfile)
    ids = [vocab.encode_term(t) for t in terms]
    # an introduction that fell out of the vocabulary is no longer trackable
    intro = {p for p in intro_positions if ids[p] != vocab.oov_id}
    return EncodedFile(ids=ids, intro=intro)


def write_encoded(ef: EncodedFile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        intro = ",".join(str(p) for p in sorted(ef.intro))
        fh.write(f"{len(ef.ids)} {intro}\n")
        fh.write(" ".join(str(i) for i in ef.ids) + "\n")


def read_encoded(path) -> EncodedFile:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split(" ", 1)
        n = int(header[0])
        intro_text = header[1].strip() if len(header) > 1 else ""
        intro = {int(p) for p in intro_text.split(",")} if intro_text else set()
        ids = [int(t) for t in fh.readline().split()]
    if len(ids) != n:
        raise ValueError(f"token count mismatch in {path}")
    return EncodedFile(ids=ids, intro=intro)


@dataclass
class ProjectSplit:
    assignment: dict[str, str]  # project -> "train" | "dev" | "test"
    ratios: tuple[float, float, float]

    def projects(self, part: str) -> list[str]:
        return sorted(p for p, s in self.assignment.items() if s == part)


def split_projects(
    projects: list[str],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> ProjectSplit:
    """Deterministic project-level split with largest-remainder allocation."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    names = sorted(set(projects))
    if len(names) < 3:
        raise TooFewProjects(f"need at least 3 projects, got {len(names)}")
    rng = random.Random(seed)
    rng.shuffle(names)
    n = len(names)
    raw = [r * n for r in ratios]
    sizes = [int(x) for x in raw]
    remainders = sorted(range(3), key=lambda k: (raw[k] - sizes[k], -k), reverse=True)
    for k in remainders:
        if sum(sizes) == n:
            break
        sizes[k] += 1
    for k in range(3):
        if sizes[k] == 0:  # every split must be non-empty
            donor = max(range(3), key=lambda j: sizes[j])
            if sizes[donor] <= 1:
                raise TooFewProjects("cannot give every split a project")
            sizes[donor] -= 1
            sizes[k] += 1
    assignment: dict[str, str] = {}
    start = 0
    for part, size in zip(("train", "dev", "test"), sizes):
        for name in names[start : start + size]:
            assignment[name] = part
        start += size
    return ProjectSplit(assignment=assignment, ratios=tuple(ratios))


@dataclass
class Segment:
    inputs: np.ndarray  # [B, L] int32
    targets: np.ndarray  # [B, L] int32 (valid where mask)
    reset: np.ndarray  # [B, L] bool: clear state before consuming this input
    intro: np.ndarray  # [B, L] bool: input token introduces an identifier
    intro_ids: np.ndarray  # [B, L] int32: the introduced vocab id, else 0
    mask: np.ndarray  # [B, L] bool: prediction at this step counts


def assign_lanes(lengths: list[int], batch_size: int) -> list[list[int]]:
    """Greedy balanced packing: longest file first onto the lightest lane."""
    order = sorted(range(len(lengths)), key=lambda i: (-lengths[i], i))
    lanes: list[list[int]] = [[] for _ in range(batch_size)]
    totals = [0] * batch_size
    for idx in order:
        lane = min(range(batch_size), key=lambda b: (totals[b], b))
        lanes[lane].append(idx)
        totals[lane] += lengths[idx]
    return lanes


class BatchStream:
    """Iterable of Segments; lanes concatenate whole files, state carries over."""

    def __init__(self, files: list[EncodedFile], batch_size: int, unroll: int):
        if batch_size < 1 or unroll < 1:
            raise ValueError("batch_size and unroll must be >= 1")
        self.files = files
        self.batch_size = batch_size
        self.unroll = unroll
        self.lanes = assign_lanes([len(f) for f in files], batch_size)
        self._steps = max(
            (sum(len(files[i]) for i in lane) for lane in self.lanes), default=0
        )

    @property
    def n_steps(self) -> int:
        return self._steps

    @property
    def n_segments(self) -> int:
        return -(-self._steps // self.unroll) if self._steps else 0

    @property
    def n_predictions(self) -> int:
        return sum(max(len(f) - 1, 0) for f in self.files)

    def _lane_arrays(self, lane: list[int]):
        n = self._steps
        inputs = np.zeros(n, dtype=np.int32)
        targets = np.zeros(n, dtype=np.int32)
        reset = np.zeros(n, dtype=bool)
        intro = np.zeros(n, dtype=bool)
        intro_ids = np.zeros(n, dtype=np.int32)
        mask = np.zeros(n, dtype=bool)
        pos = 0
        for fi in lane:
            f = self.files[fi]
            m = len(f)
            if m == 0:
                continue
            inputs[pos : pos + m] = f.ids
            targets[pos : pos + m - 1] = f.ids[1:]
            mask[pos : pos + m - 1] = True
            reset[pos] = True
            for p in f.intro:
                intro[pos + p] = True
                intro_ids[pos + p] = f.ids[p]
            pos += m
        return inputs, targets, reset, intro, intro_ids, mask

    def __iter__(self):
        B, L, n = self.batch_size, self.unroll, self._steps
        if n == 0:
            return
        per_lane = [self._lane_arrays(lane) for lane in self.lanes]
        for start in range(0, n, L):
            end = min(start + L, n)
            width = end - start
            seg = Segment(
                inputs=np.zeros((B, L), dtype=np.int32),
                targets=np.zeros((B, L), dtype=np.int32),
                reset=np.zeros((B, L), dtype=bool),
                intro=np.zeros((B, L), dtype=bool),
                intro_ids=np.zeros((B, L), dtype=np.int32),
                mask=np.zeros((B, L), dtype=bool),
            )
            for b, arrays in enumerate(per_lane):
                inputs, targets, reset, intro, intro_ids, mask = arrays
                seg.inputs[b, :width] = inputs[start:end]
                seg.targets[b, :width] = targets[start:end]
                seg.reset[b, :width] = reset[start:end]
                seg.intro[b, :width] = intro[start:end]
                seg.intro_ids[b, :width] = intro_ids[start:end]
                seg.mask[b, :width] = mask[start:end]
            yield seg


def make_batches(files, vocab: Vocabulary, batch_size: int, unroll: int) -> BatchStream:
    """Batch stream over normalized or pre-encoded files."""
    encoded = [
        f if isinstance(f, EncodedFile) else encode_file(f, vocab) for f in files
    ]
    return BatchStream(encoded, batch_size, unroll)
