"""Planted long-range-dependency corpus in normalized-token format.

Each generated file introduces identifiers with a key token
("let k07 var3 k07") and later forces re-uses of the same identifier
behind the same key ("use k07 var3"). Every re-use lands a controlled
distance after the identifier's previous occurrence, far beyond a short
attention window but inside the pointer's identifier memory. The
key-to-identifier binding is shuffled per file, so a model cannot
answer from global statistics: it must recall which identifier followed
that key earlier in the file.

The key echo after the introduced identifier matters: predicting it is
a one-step task, so the hidden state at the identifier's position (the
vector a pointer memory stores) is pushed to encode the key by the
ordinary next-token loss, with no gradient across the long gap. Without
the echo that vector carries no key signal and slot attention cannot
get off the ground under truncated backpropagation.

Filler positions cycle through a fixed token pattern. Predictable
filler keeps the next-token loss concentrated on the planted structure
instead of burying it under irreducible noise, and it carries no signal
about the planted pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pylex import SourceToken, TokenKind
from .pynorm import Binding, NormalizedFile

INTRO_MARK = "let"
REUSE_MARK = "use"
FILLER = ("pass", "(", ")", ":", "=", "+", "if", "return",
          "load", "send", "poll", "tick", "step", "emit")
_OPERATORS = {"(", ")", ":", "=", "+"}
_KEYWORDS = {"pass", "if", "return", "let", "use"}


@dataclass(frozen=True)
class SynthSpec:
    n_files: int = 80
    idents_per_file: int = 6
    reuses: int = 3  # forced re-uses per identifier
    d_min: int = 60  # re-use distance bounds, tokens since last occurrence
    d_max: int = 100
    n_vars: int = 6  # identifier pool (var1..varN), every file uses all of it
    n_keys: int = 6
    seed: int = 0

    def __post_init__(self):
        if not 20 <= self.d_min <= self.d_max <= 200:
            raise ValueError("re-use distance range must lie within [20, 200]")
        if self.n_files < 1 or self.reuses < 1:
            raise ValueError("need at least one file and one re-use")
        if not 1 <= self.idents_per_file <= min(self.n_vars, self.n_keys):
            raise ValueError("idents_per_file exceeds the identifier/key pools")


@dataclass
class SynthFile:
    nfile: NormalizedFile
    intro_positions: list[int]  # token index of each introduced identifier
    reuse_positions: list[int]  # token indices of the forced re-uses


def _token(term: str, position: int) -> SourceToken:
    if term in _OPERATORS:
        kind = TokenKind.OPERATOR
    elif term in _KEYWORDS:
        kind = TokenKind.KEYWORD
    else:
        kind = TokenKind.NAME
    return SourceToken(kind, term, line=position + 1, col=0)


def _place_window(occupied: set[int], rng: np.random.Generator,
                  base: int, d_min: int, d_max: int) -> int:
    """Pick base+d, d ~ U[d_min, d_max], whose 3-token window is free."""
    for _ in range(500):
        pos = base + int(rng.integers(d_min, d_max + 1))
        window = {pos - 2, pos - 1, pos}
        if not window & occupied:
            occupied |= window
            return pos
    raise RuntimeError("could not place a re-use window; corpus too dense")


def generate_file(spec: SynthSpec, index: int) -> SynthFile:
    rng = np.random.default_rng([spec.seed, index])
    n = spec.idents_per_file
    var_terms = [f"var{int(v) + 1}" for v in
                 rng.choice(spec.n_vars, size=n, replace=False)]
    key_terms = [f"k{int(k):02d}" for k in
                 rng.choice(spec.n_keys, size=n, replace=False)]

    occupied: set[int] = set()
    events: dict[int, str] = {}
    intro_positions: list[int] = []
    reuse_positions: list[int] = []
    # all introductions go down first so the re-use placement below can
    # collision-check against every planted window, not just earlier ones
    for i in range(n):
        # introductions every ~8 tokens with jitter; the 4-token windows
        # stay disjoint since consecutive gaps are at least 8 - 3 = 5
        intro = 7 + 8 * i + int(rng.integers(0, 4))
        occupied |= {intro - 2, intro - 1, intro, intro + 1}
        events[intro - 2] = INTRO_MARK
        events[intro - 1] = key_terms[i]
        events[intro] = var_terms[i]
        events[intro + 1] = key_terms[i]  # echo, see module docstring
        intro_positions.append(intro)
    for i in range(n):
        last = intro_positions[i]
        for _ in range(spec.reuses):
            pos = _place_window(occupied, rng, last, spec.d_min, spec.d_max)
            events[pos - 2] = REUSE_MARK
            events[pos - 1] = key_terms[i]
            events[pos] = var_terms[i]
            reuse_positions.append(pos)
            last = pos

    length = max(occupied) + 1 + int(rng.integers(5, 16))
    tokens = []
    for pos in range(length):
        term = events.get(pos)
        if term is None:
            term = FILLER[pos % len(FILLER)]
        tokens.append(_token(term, pos))

    bindings = []
    intro_map: dict[int, Binding] = {}
    for i, pos in enumerate(intro_positions):
        binding = Binding(original=var_terms[i], anon=var_terms[i],
                          group="variable", scope_id=0,
                          def_index=pos, intro_index=pos)
        bindings.append(binding)
        intro_map[pos] = binding
    nfile = NormalizedFile(
        tokens=tokens,
        symbols=bindings,
        intro_positions=intro_map,
        anon_names=frozenset(var_terms),
    )
    return SynthFile(nfile=nfile, intro_positions=intro_positions,
                     reuse_positions=sorted(reuse_positions))


def generate(spec: SynthSpec) -> list[SynthFile]:
    return [generate_file(spec, i) for i in range(spec.n_files)]


def write_corpus(files: list[SynthFile], out_dir) -> list[tuple[str, str]]:
    """Write token/symbol file pairs; returns the paths, generation order."""
    import os

    from .pynorm import write_normalized

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    width = max(3, len(str(len(files) - 1)))
    for i, sf in enumerate(files):
        tok = os.path.join(out_dir, f"synth_{i:0{width}d}.tokens")
        sym = os.path.join(out_dir, f"synth_{i:0{width}d}.symbols")
        write_normalized(sf.nfile, tok, sym)
        paths.append((tok, sym))
    return paths
