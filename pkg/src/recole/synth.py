"""Synthetic family/affiliation knowledge graphs in the inductive-split layout.

Two worlds are generated from one seed: a training world and an inductive
world over a disjoint entity set, sharing the relation vocabulary. Every fact
is produced by a rule that leaves a short supporting path in the graph, so
held-out facts have non-empty enclosing subgraphs.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

KIN = ["father_of", "mother_of", "son_of", "daughter_of", "husband_of", "wife_of",
       "brother_of", "sister_of", "uncle_of", "aunt_of", "cousin_of"]
AFFILIATION = ["works_at", "employed_at", "colleague_of", "studies_at", "classmate_of",
               "located_in", "part_of", "lives_in"]
RELATIONS = KIN + AFFILIATION
LONG_TAIL = "cousin_of"
SYNONYMS = ("employed_at", "works_at")  # (held out in the unseen protocol, its synonym)

KIN_WORDS = ["father", "mother", "son", "daughter", "husband", "wife", "brother", "sister",
             "uncle", "aunt", "cousin"]
AFFIL_WORDS = ["works", "colleague", "studies", "classmate", "located", "part", "lives"]
FUNCTION_WORDS = ["of", "at", "in"]


@dataclass
class SynthConfig:
    seed: int = 42
    train_clans: int = 8
    test_clans: int = 12
    cities: int = 3
    divisions_per_company: int = 2
    companies: int = 6
    schools: int = 8
    colleague_prob: float = 0.3
    classmate_prob: float = 0.15
    long_tail_train: int = 3
    long_tail_test: int = 2
    query_frac: float = 0.12
    dim: int = 300


class _World:
    def __init__(self, prefix: str, rng: np.random.Generator):
        self.prefix = prefix
        self.rng = rng
        self.n = 0
        self.facts: list[tuple[str, str, str]] = []
        self._seen = set()

    def entity(self, kind: str) -> str:
        self.n += 1
        return f"{self.prefix}_{kind}{self.n}"

    def add(self, h, r, t):
        if h != t and (h, r, t) not in self._seen:
            self._seen.add((h, r, t))
            self.facts.append((h, r, t))


def _couple(w: _World, husband, wife):
    w.add(husband, "husband_of", wife)
    w.add(wife, "wife_of", husband)


def _children(w: _World, father, mother, k):
    kids = []
    for _ in range(k):
        male = bool(w.rng.random() < 0.5)
        c = w.entity("p")
        kids.append((c, male))
        w.add(father, "father_of", c)
        w.add(mother, "mother_of", c)
        w.add(c, "son_of" if male else "daughter_of", father)
        w.add(c, "son_of" if male else "daughter_of", mother)
    for a, male in kids:
        for b, _ in kids:
            if a != b:
                w.add(a, "brother_of" if male else "sister_of", b)
    return kids


def _clan(w: _World):
    """Three generations; returns (adults, students, cousin pairs)."""
    gf, gm = w.entity("p"), w.entity("p")
    _couple(w, gf, gm)
    gen2 = _children(w, gf, gm, int(w.rng.integers(2, 4)))
    adults, students, branches = [], [], []
    for person, male in gen2:
        spouse = w.entity("p")
        if male:
            _couple(w, person, spouse)
            kids = _children(w, person, spouse, int(w.rng.integers(1, 4)))
        else:
            _couple(w, spouse, person)
            kids = _children(w, spouse, person, int(w.rng.integers(1, 4)))
        adults += [person, spouse]
        students += [c for c, _ in kids]
        branches.append((person, male, kids))
    cousins = []
    for i, (sib, male, _) in enumerate(branches):
        for j, (_, _, kids) in enumerate(branches):
            if i == j:
                continue
            for c, _ in kids:
                w.add(sib, "uncle_of" if male else "aunt_of", c)
            for a, _ in branches[i][2]:
                for b, _ in kids:
                    cousins.append((a, b))
    return adults, students, cousins


def _world(prefix: str, n_clans: int, cfg: SynthConfig, rng: np.random.Generator, n_long_tail: int):
    w = _World(prefix, rng)
    cities = [w.entity("city") for _ in range(cfg.cities)]
    divisions = []
    for _ in range(cfg.companies):
        company = w.entity("org")
        city = cities[int(rng.integers(len(cities)))]
        w.add(company, "located_in", city)
        mids = []
        for _ in range(2):
            mid = w.entity("org")
            w.add(mid, "part_of", company)
            w.add(mid, "located_in", city)
            mids.append(mid)
        for mid in mids:
            for _ in range(cfg.divisions_per_company):
                div = w.entity("org")
                w.add(div, "part_of", mid)
                w.add(div, "part_of", company)
                w.add(div, "located_in", city)
                divisions.append((div, city))
    schools = []
    for _ in range(cfg.schools):
        s = w.entity("school")
        schools.append(s)
        w.add(s, "located_in", cities[int(rng.integers(len(cities)))])

    adults, students, cousins = [], [], []
    for _ in range(n_clans):
        a, s, c = _clan(w)
        adults += a
        students += s
        cousins += c

    # affiliations
    staff = {}
    for p in adults:
        div, city = divisions[int(rng.integers(len(divisions)))]
        staff.setdefault(div, []).append(p)
        w.add(p, "works_at" if rng.random() < 0.5 else "employed_at", div)
        w.add(p, "lives_in", city)
    for div, people in staff.items():
        for a in people:
            for b in people:
                if a != b and rng.random() < cfg.colleague_prob:
                    w.add(a, "colleague_of", b)
    enrolled = {}
    for p in students:
        s = schools[int(rng.integers(len(schools)))]
        enrolled.setdefault(s, []).append(p)
        w.add(p, "studies_at", s)
    for s, people in enrolled.items():
        for a in people:
            for b in people:
                if a != b and rng.random() < cfg.classmate_prob:
                    w.add(a, "classmate_of", b)

    long_tail = []
    if cousins:
        pick = rng.permutation(len(cousins))[:n_long_tail]
        long_tail = [(cousins[i][0], LONG_TAIL, cousins[i][1]) for i in sorted(pick)]
    return w.facts, long_tail


def _split(facts, fracs, rng):
    idx = rng.permutation(len(facts))
    out, start = [], 0
    for f in fracs:
        k = int(round(f * len(facts)))
        out.append(sorted(int(i) for i in idx[start:start + k]))
        start += k
    rest = sorted(int(i) for i in idx[start:])
    return [[facts[i] for i in part] for part in [rest] + out]


def word_vectors(rng: np.random.Generator, dim: int) -> dict[str, np.ndarray]:
    def unit():
        v = rng.normal(size=dim)
        return v / np.linalg.norm(v)

    kin, aff = unit(), unit()
    vecs = {}
    for wd in KIN_WORDS:
        vecs[wd] = kin + 0.35 * unit()
    for wd in AFFIL_WORDS:
        vecs[wd] = aff + 0.35 * unit()
    vecs["employed"] = vecs["works"] + 0.02 * unit()
    for wd in FUNCTION_WORDS:
        vecs[wd] = 0.1 * unit()
    return vecs


def _write_triplets(path: Path, facts):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in facts:
            fh.write(f"{h}\t{r}\t{t}\n")


def synth_dataset(out_dir, cfg: SynthConfig | None = None, name: str = "synth") -> dict[str, Path]:
    """Write ``<name>/``, ``<name>_ind/``, a word-vector file and a run config into ``out_dir``."""
    cfg = cfg or SynthConfig()
    out = Path(out_dir)
    rng = np.random.default_rng(cfg.seed)
    train_facts, train_lt = _world("tr", cfg.train_clans, cfg, rng, cfg.long_tail_train)
    test_facts, test_lt = _world("te", cfg.test_clans, cfg, rng, cfg.long_tail_test)

    train, valid, test = _split(train_facts, [0.05, 0.05], rng)
    train = train + train_lt
    ind_graph, ind_valid, ind_test = _split(test_facts + test_lt, [0.05, cfg.query_frac], rng)

    train_dir, ind_dir = out / name, out / f"{name}_ind"
    train_dir.mkdir(parents=True, exist_ok=True)
    ind_dir.mkdir(parents=True, exist_ok=True)
    for d, parts in ((train_dir, (train, valid, test)), (ind_dir, (ind_graph, ind_valid, ind_test))):
        for split, facts in zip(("train", "valid", "test"), parts):
            _write_triplets(d / f"{split}.txt", facts)

    glove = out / f"glove.{name}.{cfg.dim}d.txt"
    vecs = word_vectors(rng, cfg.dim)
    with open(glove, "w", encoding="utf-8", newline="\n") as fh:
        for tok, v in vecs.items():
            fh.write(tok + " " + " ".join(f"{x:.6f}" for x in v) + "\n")

    cfg_path = out / f"{name}.cfg"
    with open(cfg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# synthetic dataset, generator seed {cfg.seed}\n")
        fh.write(f"dataset = {train_dir.name}\n")
        fh.write(f"test_dataset = {ind_dir.name}\n")
        fh.write(f"glove = {glove.name}\n")
        fh.write(f"glove_dim = {cfg.dim}\n")
        fh.write(f"held_out_relation = {SYNONYMS[0]}\n")
    return {"train": train_dir, "test": ind_dir, "glove": glove, "config": cfg_path}
