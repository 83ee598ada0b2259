"""Relation names -> averaged word vectors."""
from __future__ import annotations

import logging
import re
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

DELIMITERS = re.compile(r"[/_.:\-\s]+")
MIN_MATCH = 2


class WordVectorFormatError(ValueError):
    pass


class WordVectors(dict):
    """token -> 1-D float64 vector, all of one dimensionality."""

    def __init__(self, dim: int, items=()):
        super().__init__(items)
        self.dim = dim


@dataclass
class RelationSemantics:
    R_glo: np.ndarray    # n_r x dim
    coverage: np.ndarray  # in-vocabulary token count per relation
    tokens: list[list[str]]

    @property
    def oov(self) -> np.ndarray:
        return self.coverage == 0


def load_word_vectors(path, expected_dim: int = 300, keep: set[str] | None = None) -> WordVectors:
    """Read a GloVe-style text file (``token v1 ... v_dim`` per line).

    Tokens are lowercased; a repeated token overwrites the earlier vector.
    ``keep`` restricts loading to a token subset, which matters for the
    multi-gigabyte files.
    """
    wv = WordVectors(expected_dim)
    dups = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            token = parts[0].lower()
            if keep is not None and token not in keep:
                continue
            if len(parts) - 1 != expected_dim:
                raise WordVectorFormatError(
                    f"{path}:{lineno}: expected {expected_dim} values for {token!r}, got {len(parts) - 1}")
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError as exc:
                raise WordVectorFormatError(f"{path}:{lineno}: {exc}") from None
            if token in wv:
                dups += 1
                log.debug("duplicate token %r at line %d, keeping the later vector", token, lineno)
            wv[token] = vec
    if dups:
        warnings.warn(f"{path}: {dups} duplicate tokens, later vectors kept", stacklevel=2)
    return wv


def _greedy_segment(seg: str, vocab) -> list[str]:
    out = []
    i = 0
    n = len(seg)
    while i < n:
        for j in range(n, i + MIN_MATCH - 1, -1):
            if seg[i:j] in vocab:
                out.append(seg[i:j])
                i = j
                break
        else:
            i += 1
    return out


def tokenize_relation(name: str, vocab) -> list[str]:
    """Split a relation identifier into in-vocabulary words.

    Splits on ``/ _ . : -`` and whitespace, lowercases, then segments any
    piece that is not itself a word by greedy longest-prefix matching
    (matches of at least two characters); leftovers are dropped.
    """
    tokens = []
    for seg in DELIMITERS.split(name.lower()):
        if not seg:
            continue
        if seg in vocab:
            tokens.append(seg)
        else:
            tokens.extend(_greedy_segment(seg, vocab))
    return tokens


def candidate_tokens(names: Iterable[str]) -> set[str]:
    """Every string tokenize_relation could look up for these names."""
    cands = set()
    for name in names:
        for seg in DELIMITERS.split(name.lower()):
            n = len(seg)
            for i in range(n):
                for j in range(i + 1, n + 1):
                    cands.add(seg[i:j])
    return cands


def embed_relations(relation_names, wv: WordVectors) -> RelationSemantics:
    """Mean word vector per relation; zero row with coverage 0 when nothing matches.

    Accepts a KnowledgeGraph (its relation vocabulary is used) or a list of names.
    """
    vocab = getattr(relation_names, "relation_vocab", None)
    names = vocab.names if vocab is not None else list(relation_names)
    R = np.zeros((len(names), wv.dim))
    cov = np.zeros(len(names), dtype=np.int64)
    toks = []
    for i, name in enumerate(names):
        tk = tokenize_relation(name, wv)
        toks.append(tk)
        cov[i] = len(tk)
        if tk:
            R[i] = np.mean([wv[t] for t in tk], axis=0)
    return RelationSemantics(R, cov, toks)
