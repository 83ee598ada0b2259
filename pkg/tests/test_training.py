import math

import numpy as np
import pytest

from recole import autodiff as ad
from recole.autodiff import Tensor
from recole.cluster import ClusterModel
from recole.encoder import encode, init_encoders
from recole.kg import build_graph
from recole.subgraph import SubgraphCache
from recole.training import (Adam, ModelState, TrainConfig, TrainingError, contrastive_loss, finetune,
                             finetune_step, pretrain, pretrain_step, similarity, soft_margin_loss)


def _H(*rows):
    return Tensor(np.array(rows, dtype=float))


def test_contrastive_equal_similarities():
    h = _H([1, 2], [3, 4])
    assert abs(contrastive_loss(h, h, [h, h, h], 0.5).item() - math.log(3)) < 1e-12
    assert abs(contrastive_loss(h, h, [h], 0.5).item()) < 1e-12


def test_contrastive_closed_form():
    tar = _H([1, 0])
    pos = _H([1, 0])      # cosine 1
    neg = _H([0, 1])      # cosine 0
    val = contrastive_loss(tar, pos, [neg, neg], 0.5).item()
    assert abs(val - (-2 + math.log(2))) < 1e-12


def test_contrastive_ablations():
    tar, neg = _H([1, 0]), _H([0, 1])
    assert contrastive_loss(tar, tar, [neg], 0.5, ablation="no-negative").item() == -2.0
    with_pos = contrastive_loss(tar, _H([1, 0]), [neg], 0.5, include_positive=True).item()
    assert abs(with_pos - (-2 + math.log(1 + math.exp(2)))) < 1e-12
    nopos = contrastive_loss(tar, None, [neg], 0.5, ablation="no-positive").item()
    assert abs(nopos - (-2 + 0)) < 1e-12


def test_similarity_modes():
    a, b = _H([1, 0], [0, 1]), _H([1, 0], [0, -1])
    assert abs(similarity(a, b).item()) < 1e-15
    assert abs(similarity(a, b, "mean_rows").item()) < 1e-15


def test_soft_margin():
    for y in (1, -1):
        assert abs(soft_margin_loss(Tensor(0.0), y).item() - math.log(2)) < 1e-12
    assert abs(soft_margin_loss(Tensor(20.0), 1).item() - math.log1p(math.exp(-20))) < 1e-20
    assert soft_margin_loss(Tensor(3.0), 1).item() == soft_margin_loss(Tensor(-3.0), -1).item()
    with pytest.raises(ValueError):
        soft_margin_loss(Tensor(0.0), 0)


def test_adam_first_step():
    p = Tensor(np.array([[1.0, -2.0, 0.5]]), requires_grad=True)
    g = np.array([[0.3, -4.0, 1e-3]])
    p.grad = g.copy()
    before = p.data.copy()
    Adam(lr=0.01).step([p])
    assert np.allclose(p.data - before, -0.01 * g / (np.sqrt(g * g) + 1e-8), rtol=1e-12, atol=0)


def test_adam_skips_unused():
    a = Tensor([[1.0]], requires_grad=True)
    b = Tensor([[1.0]], requires_grad=True)
    a.grad = np.array([[1.0]])
    Adam().step([a, b])
    assert b.data[0, 0] == 1.0 and a.data[0, 0] != 1.0


def _family_kg():
    raw = []
    for i in range(6):
        f, m, c, s = f"f{i}", f"m{i}", f"c{i}", f"s{i}"
        raw += [(f, "husband_of", m), (m, "wife_of", f), (f, "father_of", c), (m, "mother_of", c),
                (c, "son_of", f), (c, "son_of", m), (c, "brother_of", s), (s, "brother_of", c),
                (f, "father_of", s), (m, "mother_of", s), (f, "works_at", f"o{i % 2}"),
                (m, "works_at", f"o{(i + 1) % 2}"), (f"o{i % 2}", "located_in", "city"),
                (f, "lives_in", "city"), (m, "lives_in", "city")]
    return build_graph(raw)


def _model(g, assignment, d=8, seed=0):
    a = np.asarray(assignment)
    k = a.max() + 1
    cm = ClusterModel(int(k), a, np.zeros((k, 2)), np.eye(len(a)), 0.0)
    return ModelState(cm, init_encoders(int(k), 2, g.n_relations, d, 2, seed))


def _kin_work_split(g):
    kin = {"husband_of", "wife_of", "father_of", "mother_of", "son_of", "brother_of"}
    return [0 if g.relation_vocab.name(r) in kin else 1 for r in range(g.n_relations)]


def test_pretrain_no_usable_triplets_leaves_params():
    g = build_graph([("a", "r", "b"), ("c", "s", "d")])  # every subgraph empty
    model = _model(g, [0, 1])
    before = [t.data.copy() for e in model.encoders for t in e.parameters()]
    cfg = TrainConfig(m=2, d=8, K=2, n_c=2, epochs_pretrain=1)
    with pytest.raises(TrainingError):
        pretrain(g, model, cfg)
    rng = np.random.default_rng(0)
    out = pretrain_step(g.triplets, g, model, cfg, SubgraphCache(g, 2), rng, Adam())
    assert out is None
    after = [t.data for e in model.encoders for t in e.parameters()]
    assert all(np.array_equal(a, b) for a, b in zip(before, after))


def _margin(g, model, cache, rng, cfg):
    from recole.cluster import sample_from_cluster
    cm = model.cluster_model
    d = []
    with ad.no_grad():
        for t in g.triplets:
            sg = cache(t)
            if sg is None:
                continue
            c = cm.cluster_of(t.rel)
            p = sample_from_cluster(c, g, cm, rng, exclude=t)
            n = sample_from_cluster(1 - c, g, cm, rng)
            if p is None or n is None or cache(p) is None or cache(n) is None:
                continue
            H = encode(sg, model.encoders[c])
            Hp = encode(cache(p), model.encoders[c])
            Hn = encode(cache(n), model.encoders[1 - c])
            d.append(similarity(H, Hp).item() - similarity(H, Hn).item())
    return float(np.mean(d))


def test_pretrain_increases_margin(capsys):
    g = _family_kg()
    model = _model(g, _kin_work_split(g))
    cache = SubgraphCache(g, 2)
    cfg = TrainConfig(m=2, d=8, K=2, n_c=2, epochs_pretrain=30, learning_rate=5e-3)
    before = _margin(g, model, cache, np.random.default_rng(1), cfg)
    pretrain(g, model, cfg, cache, seed=0)
    after = _margin(g, model, cache, np.random.default_rng(1), cfg)
    assert after > before
    assert "pretrain epoch 30" in capsys.readouterr().out


def test_finetune_loss_drops_and_is_deterministic(tmp_path, capsys):
    g = _family_kg()
    cfg = TrainConfig(m=2, d=8, K=2, n_c=2, epochs_finetune=15, learning_rate=5e-3)
    runs = []
    for _ in range(2):
        model = _model(g, _kin_work_split(g))
        hist = []
        finetune(g, model, cfg, seed=3, history=hist, metrics_path=tmp_path / "m.csv")
        runs.append((hist, [t.data.copy() for e in model.encoders for t in e.parameters()]))
    hist = runs[0][0]
    assert hist[-1] < hist[0]
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(a, b) for a, b in zip(runs[0][1], runs[1][1]))
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "phase,epoch,mean_loss,seconds" and len(lines) == 31


def test_finetune_step_one_neg_per_pos(monkeypatch):
    import recole.training as tr
    calls = []
    real = tr.soft_margin_loss
    monkeypatch.setattr(tr, "soft_margin_loss", lambda s, y: calls.append(y) or real(s, y))
    g = _family_kg()
    model = _model(g, _kin_work_split(g))
    cfg = TrainConfig(m=2, d=8, K=2, n_c=2)
    cache = SubgraphCache(g, 2)
    batch = [t for t in g.triplets if cache(t) is not None][:4]
    finetune_step(batch, g, model, cfg, cache, np.random.default_rng(0), Adam())
    # one corruption per positive; one whose subgraph stays empty after resampling is dropped
    assert calls.count(1) == 4 and 3 <= calls.count(-1) <= 4
    assert all(not (a == -1 and b == -1) for a, b in zip(calls, calls[1:]))


def test_no_pretrain_is_noop():
    g = _family_kg()
    model = _model(g, _kin_work_split(g))
    before = [t.data.copy() for e in model.encoders for t in e.parameters()]
    pretrain(g, model, TrainConfig(m=2, d=8, K=2, n_c=2, ablation="no-pretrain"))
    assert all(np.array_equal(a, t.data) for a, t in zip(before, (t for e in model.encoders for t in e.parameters())))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(tau=0)
    with pytest.raises(ValueError):
        TrainConfig(ablation="bogus")
