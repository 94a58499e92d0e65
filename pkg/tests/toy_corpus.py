"""Fixed 200-token corpus used by the n-gram tests.

Two small files run through the real pipeline (tokenize, normalize,
encode). The sources repeat statement shapes on purpose so that longer
contexts genuinely help, which the order-monotonicity check relies on.
"""

from __future__ import annotations

from sourcelm import corpus, pylex, pynorm

SRC_A = '''def scale(values, factor):
    total = 0
    for value in values:
        total = total + value * factor
    return total

def shift(values, offset):
    total = 0
    for value in values:
        total = total + value + offset
    return total

def clip(values, bound):
    total = 0
    for value in values:
        if value < bound:
            total = total + value
    return total
'''

SRC_B = '''def count(items, limit):
    hits = 0
    for item in items:
        if item < limit:
            hits = hits + 1
    return hits

def drop(items, limit,):
    kept = 0
    for item in items:
        if item > limit:
            kept = kept + 1
        else:
            kept = kept - 1
    return kept
'''


def build():
    """Returns (files, vocab_size, vocab): 200 ids in two files."""
    nfiles = [pynorm.normalize(pylex.tokenize(s)) for s in (SRC_A, SRC_B)]
    vocab = corpus.build_vocab(nfiles, min_count=1)
    files = [list(corpus.encode_file(nf, vocab).ids) for nf in nfiles]
    assert sum(len(f) for f in files) == 200
    return files, len(vocab.id_to_term), vocab


def build_encoded():
    """Same corpus as EncodedFiles (intro flags kept), for the neural side."""
    nfiles = [pynorm.normalize(pylex.tokenize(s)) for s in (SRC_A, SRC_B)]
    vocab = corpus.build_vocab(nfiles, min_count=1)
    files = [corpus.encode_file(nf, vocab) for nf in nfiles]
    return files, vocab
