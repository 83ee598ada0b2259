import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recole.kg import (CorruptionError, Triplet, TripletParseError, UnknownRelationError, build_graph,
                       corrupt, load_dataset_dir, load_split, relation_frequency)

from oracles import random_kg


def test_load_split(tmp_path):
    p = tmp_path / "train.txt"
    p.write_text("A\tstudent_of\tB\n\nC\tr\tD\n")
    assert load_split(p) == [("A", "student_of", "B"), ("C", "r", "D")]
    p.write_text("")
    assert load_split(p) == []


def test_load_split_rejects_spaces(tmp_path):
    p = tmp_path / "train.txt"
    p.write_text("A student_of B\n")
    with pytest.raises(TripletParseError) as e:
        load_split(p)
    assert e.value.lineno == 1


def test_build_graph_counts_and_dedup():
    g = build_graph([("a", "r", "b"), ("b", "r", "c"), ("c", "s", "d")])
    assert g.n_entities == 4 and len(g) == 3
    g = build_graph([("a", "r", "b"), ("a", "r", "b")])
    assert len(g) == 1


def test_fixed_relation_vocab():
    g = build_graph([("a", "r", "b")])
    test = build_graph([("x", "r", "y")], g.relation_vocab)
    assert test.relation_vocab == g.relation_vocab
    assert test.entity_vocab.names == ["x", "y"]
    with pytest.raises(UnknownRelationError):
        build_graph([("x", "q", "y")], g.relation_vocab)


def test_index_round_trip():
    g = random_kg(np.random.default_rng(0), 30, 200, 4)
    for h, outs in enumerate(g.out_index):
        for r, t, eid in outs:
            assert g.triplets[eid] == (h, r, t)
    for t, ins in enumerate(g.in_index):
        for r, h, eid in ins:
            assert g.triplets[eid] == (h, r, t)


def test_corrupt_only_candidate():
    g = build_graph([("A", "r", "B"), ("C", "s", "A")])
    t = g.lookup(("A", "r", "B"))
    out = corrupt(t, g, np.random.default_rng(0), side="tail")
    assert g.names(out) == ("A", "r", "C")


def test_corrupt_saturated():
    ents = ["A", "B", "C", "D"]
    g = build_graph([("A", "r", x) for x in ents if x != "A"])
    with pytest.raises(CorruptionError):
        corrupt(g.lookup(("A", "r", "B")), g, np.random.default_rng(0), side="tail")


def test_corrupt_deterministic_and_valid():
    g = random_kg(np.random.default_rng(3), 30, 80, 2)
    t = g.triplets[0]
    rng1, rng2 = np.random.default_rng(5), np.random.default_rng(5)
    a = [corrupt(t, g, rng1) for _ in range(50)]
    b = [corrupt(t, g, rng2) for _ in range(50)]
    assert a == b
    for c in a:
        assert c not in g.triplet_set and c.rel == t.rel
        assert (c.head == t.head) != (c.tail == t.tail)
        assert c.head != c.tail or t.head == t.tail


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_relation_frequency_matches_scan(seed):
    g = random_kg(np.random.default_rng(seed), 40, 300, 5)
    naive = {}
    for t in g.triplets:
        naive[t.rel] = naive.get(t.rel, 0) + 1
    assert relation_frequency(g) == {r: naive.get(r, 0) for r in range(g.n_relations)}


def test_relation_frequency_small():
    g = build_graph([("A", "r0", "B"), ("C", "r0", "D"), ("A", "r1", "B")])
    assert relation_frequency(g) == {0: 2, 1: 1}
    g = build_graph([("A", "r0", "B")])
    assert relation_frequency(g.without(lambda t: True)) == {0: 0}


def test_without_keeps_vocab():
    g = build_graph([("a", "r", "b"), ("b", "s", "c")])
    h = g.without(lambda t: t.rel == 0)
    assert h.relation_vocab == g.relation_vocab and len(h) == 1 and h.by_relation[0] == []


def test_load_dataset_dir(tmp_path):
    (tmp_path / "train.txt").write_text("a\tr\tb\n")
    (tmp_path / "test.txt").write_text("c\tr\td\n")
    d = load_dataset_dir(tmp_path)
    assert set(d) == {"train", "test"} and d["test"] == [("c", "r", "d")]
