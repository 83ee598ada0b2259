"""Triplet storage: TSV loading, vocabularies, adjacency indexes and corruption."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

CORRUPT_MAX_TRIES = 100


class TripletParseError(ValueError):
    def __init__(self, path, lineno: int, line: str):
        super().__init__(f"{path}:{lineno}: expected 'head<TAB>relation<TAB>tail', got {line!r}")
        self.lineno = lineno


class UnknownRelationError(KeyError):
    pass


class UnknownEntityError(KeyError):
    pass


class CorruptionError(RuntimeError):
    pass


class Triplet(NamedTuple):
    head: int
    rel: int
    tail: int


class Vocab:
    """Bidirectional string <-> id map with ids in first-occurrence order."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list[str] = []
        self.ids: dict[str, int] = {}
        for n in names:
            self.add(n)

    def add(self, name: str) -> int:
        idx = self.ids.get(name)
        if idx is None:
            idx = len(self.names)
            self.ids[name] = idx
            self.names.append(name)
        return idx

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name) -> bool:
        return name in self.ids

    def __getitem__(self, name: str) -> int:
        return self.ids[name]

    def name(self, idx: int) -> str:
        return self.names[idx]

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.names == other.names

    def __repr__(self) -> str:
        return f"Vocab({len(self)} names)"


@dataclass
class KnowledgeGraph:
    triplets: list[Triplet]
    entity_vocab: Vocab
    relation_vocab: Vocab
    out_index: list[list[tuple[int, int, int]]] = field(repr=False)
    in_index: list[list[tuple[int, int, int]]] = field(repr=False)
    triplet_set: frozenset = field(repr=False)
    by_relation: list[list[int]] = field(repr=False)

    @property
    def n_entities(self) -> int:
        return len(self.entity_vocab)

    @property
    def n_relations(self) -> int:
        return len(self.relation_vocab)

    def __len__(self) -> int:
        return len(self.triplets)

    def __contains__(self, t) -> bool:
        return tuple(t) in self.triplet_set

    def names(self, t: Triplet) -> tuple[str, str, str]:
        return (self.entity_vocab.name(t.head), self.relation_vocab.name(t.rel),
                self.entity_vocab.name(t.tail))

    def lookup(self, raw: tuple[str, str, str]) -> Triplet:
        """Map a raw string triplet onto this graph's ids."""
        h, r, t = raw
        if r not in self.relation_vocab:
            raise UnknownRelationError(r)
        for e in (h, t):
            if e not in self.entity_vocab:
                raise UnknownEntityError(e)
        return Triplet(self.entity_vocab[h], self.relation_vocab[r], self.entity_vocab[t])

    def without(self, drop) -> "KnowledgeGraph":
        """Same vocabularies, minus the triplets for which ``drop(t)`` is true."""
        kept = [t for t in self.triplets if not drop(t)]
        return _index(kept, self.entity_vocab, self.relation_vocab)


def load_split(path) -> list[tuple[str, str, str]]:
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise TripletParseError(path, lineno, line)
            out.append((parts[0].strip(), parts[1].strip(), parts[2].strip()))
    return out


def build_graph(raw: Sequence[tuple[str, str, str]], relation_vocab: Vocab | None = None,
                entity_vocab: Vocab | None = None) -> KnowledgeGraph:
    """Index raw triplets.

    With ``relation_vocab`` given the relation set is fixed (inductive test
    graphs share the training relations) and unknown relations are an error.
    Entities get fresh ids unless ``entity_vocab`` is passed, in which case it
    is copied and extended.
    """
    ents = Vocab(entity_vocab.names if entity_vocab is not None else ())
    if relation_vocab is None:
        rels = Vocab()
    else:
        rels = Vocab(relation_vocab.names)
    seen = set()
    triplets = []
    for h, r, t in raw:
        if relation_vocab is not None:
            if r not in rels:
                raise UnknownRelationError(f"relation {r!r} is not in the fixed relation vocabulary")
            ri = rels[r]
        else:
            ri = rels.add(r)
        trip = Triplet(ents.add(h), ri, ents.add(t))
        if trip not in seen:
            seen.add(trip)
            triplets.append(trip)
    return _index(triplets, ents, rels)


def _index(triplets: list[Triplet], ents: Vocab, rels: Vocab) -> KnowledgeGraph:
    out_index = [[] for _ in range(len(ents))]
    in_index = [[] for _ in range(len(ents))]
    by_relation = [[] for _ in range(len(rels))]
    for eid, (h, r, t) in enumerate(triplets):
        out_index[h].append((r, t, eid))
        in_index[t].append((r, h, eid))
        by_relation[r].append(eid)
    return KnowledgeGraph(list(triplets), ents, rels, out_index, in_index,
                          frozenset(triplets), by_relation)


def corrupt(t: Triplet, g: KnowledgeGraph, rng: np.random.Generator, side: str = "either",
            filtered: bool = True, max_tries: int = CORRUPT_MAX_TRIES,
            known: frozenset | set | None = None) -> Triplet:
    """Replace the head or tail of ``t`` with an entity other than both.

    Filtered corruption rejects any candidate in ``g.triplet_set`` (and in
    ``known`` when supplied). Raises CorruptionError after ``max_tries``.
    """
    n = g.n_entities
    if n < 2:
        raise CorruptionError("need at least two entities to corrupt a triplet")
    if side not in ("head", "tail", "either"):
        raise ValueError(f"side must be head, tail or either, not {side!r}")
    banned = sorted({t.head, t.tail})
    n_free = n - len(banned)
    if n_free < 1:
        raise CorruptionError("need an entity other than the head and tail to corrupt with")
    for _ in range(max_tries):
        s = side if side != "either" else ("head" if rng.random() < 0.5 else "tail")
        e = int(rng.integers(n_free))
        for b in banned:
            if e >= b:
                e += 1
        cand = Triplet(e, t.rel, t.tail) if s == "head" else Triplet(t.head, t.rel, e)
        if filtered and (cand in g.triplet_set or (known is not None and cand in known)):
            continue
        return cand
    raise CorruptionError(f"no valid corruption of {tuple(t)} found after {max_tries} attempts")


def relation_frequency(g: KnowledgeGraph) -> dict[int, int]:
    return {r: len(ids) for r, ids in enumerate(g.by_relation)}


def load_dataset_dir(path) -> dict[str, list[tuple[str, str, str]]]:
    """Read whichever of train/valid/test.txt exist in ``path``."""
    path = Path(path)
    splits = {}
    for name in ("train", "valid", "test"):
        f = path / f"{name}.txt"
        if f.exists():
            splits[name] = load_split(f)
    if "train" not in splits:
        raise FileNotFoundError(f"{path / 'train.txt'} not found")
    return splits
