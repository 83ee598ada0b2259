"""Stage functions shared by the CLI, the experiment scripts and the acceptance tests."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .autodiff import no_grad
from .cluster import ClusterError, ClusterModel, assign_unseen, fit_clusters, random_clusters
from .config import ConfigError, RunConfig, from_text
from .encoder import encode, init_encoders
from .evaluation import (EvalReport, build_pool, read_pool, report, score_pool, write_pool)
from .kg import KnowledgeGraph, Triplet, UnknownEntityError, build_graph, corrupt, load_dataset_dir
from .semantics import RelationSemantics, candidate_tokens, embed_relations, load_word_vectors
from .subgraph import SubgraphCache
from .training import ModelState, finetune, pretrain
from .tsne import TsneError, pca, tsne

log = logging.getLogger(__name__)


@dataclass
class RelationSpace:
    semantics: RelationSemantics
    R: np.ndarray
    cluster_model: ClusterModel


def load_train_graph(cfg: RunConfig) -> KnowledgeGraph:
    cfg.require("dataset")
    return build_graph(load_dataset_dir(cfg.dataset)["train"])


def load_test(cfg: RunConfig, relations) -> tuple[KnowledgeGraph, list[Triplet], int]:
    """Inductive graph plus its query triplets; returns the number of unusable queries too."""
    cfg.require("test_dataset")
    splits = load_dataset_dir(cfg.test_dataset)
    g = build_graph(splits["train"], relations)
    queries, bad = [], 0
    for raw in splits.get("test", []):
        try:
            queries.append(g.lookup(raw))
        except UnknownEntityError:
            bad += 1
    return g, queries, bad


def relation_space(g: KnowledgeGraph, cfg: RunConfig, exclude: set[int] = frozenset()) -> RelationSpace:
    """Word vectors -> reduction -> clusters, leaving the ``exclude`` relations unclustered."""
    cfg.require("glove")
    names = g.relation_vocab.names
    wv = load_word_vectors(cfg.glove, cfg.glove_dim, keep=candidate_tokens(names))
    sem = embed_relations(g, wv)
    for r in np.flatnonzero(sem.oov):
        log.warning("relation %s has no known words; its semantic vector is zero", names[r])
    rel = np.array([r for r in range(len(names)) if r not in exclude])
    X = sem.R_glo[rel]
    R = np.zeros((len(names), cfg.d_r))
    if cfg.reducer == "tsne" and len(rel) >= 4:
        R_sub = tsne(X, cfg.tsne_config()).R
    elif cfg.reducer == "pca":
        R_sub = pca(X, cfg.d_r)
    else:
        if cfg.reducer == "tsne":
            log.warning("fewer than 4 relations: clustering the word vectors directly")
        R_sub = X
        R = np.zeros((len(names), X.shape[1]))
    R[rel] = R_sub
    if cfg.ablation == "random-clusters":
        cm = random_clusters(R, sem.R_glo, cfg.n_c, cfg.stage_seed("cluster"), rel)
    else:
        cm = fit_clusters(R, sem.R_glo, cfg.n_c, cfg.stage_seed("cluster"), cfg.kmeans_restarts, rel)
    return RelationSpace(sem, R, cm)


def new_model(cfg: RunConfig, cm: ClusterModel, n_r: int) -> ModelState:
    return ModelState(cm, init_encoders(cm.n_c, cfg.m, n_r, cfg.d, cfg.K, cfg.stage_seed("init")))


def to_checkpoint(cfg: RunConfig, g: KnowledgeGraph, space: RelationSpace, model: ModelState,
                  stage: str) -> ckpt.Checkpoint:
    return ckpt.Checkpoint(cfg.to_text(), list(g.relation_vocab.names), stage, cfg.seed,
                           space.semantics.R_glo, space.R, space.semantics.coverage,
                           model.cluster_model, model.encoders)


def from_checkpoint(ck: ckpt.Checkpoint) -> tuple[RunConfig, ModelState]:
    return from_text(ck.config_text), ModelState(ck.cluster_model, ck.encoders)


def checkpoint_space(ck: ckpt.Checkpoint) -> RelationSpace:
    sem = RelationSemantics(ck.R_glo, ck.coverage, [[] for _ in ck.relations])
    return RelationSpace(sem, ck.R, ck.cluster_model)


def write_assignment_csv(path, names, cm: ClusterModel):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["relation", "cluster_id"])
        for r, name in enumerate(names):
            w.writerow([name, int(cm.assignment[r])])


def stage_cluster(cfg: RunConfig) -> tuple[KnowledgeGraph, RelationSpace, ModelState]:
    g = load_train_graph(cfg)
    space = relation_space(g, cfg)
    return g, space, new_model(cfg, space.cluster_model, g.n_relations)


def stage_pretrain(cfg, g, model, cache=None, metrics_path=None):
    return pretrain(g, model, cfg.train_config(), cache, metrics_path, seed=cfg.stage_seed("pretrain"))


def stage_finetune(cfg, g, model, cache=None, metrics_path=None, history=None):
    return finetune(g, model, cfg.train_config(), cache, metrics_path,
                    seed=cfg.stage_seed("finetune"), history=history)


def stage_evaluate(cfg: RunConfig, model: ModelState, relations) -> tuple[EvalReport, list]:
    g_test, queries, bad = load_test(cfg, relations)
    cache = SubgraphCache(g_test, cfg.m)
    skipped = bad
    if cfg.eval_pool and Path(cfg.eval_pool).exists():
        pool = read_pool(cfg.eval_pool, g_test)
        skipped += len(queries) - len(pool)
    else:
        pool, sk = build_pool(queries, g_test, cfg.m, cfg.stage_seed("eval"), cfg.hits_negatives, cache)
        skipped += sk
        if cfg.eval_pool:
            write_pool(cfg.eval_pool, pool, g_test)
    sp = score_pool(pool, model, cache, cfg.aggregation, cfg.threads)
    sp.n_skipped_empty = skipped
    sp.provenance = f"eval seed {cfg.stage_seed('eval')}"
    return report(sp, g_test), sp


def run_full(cfg: RunConfig, metrics_path=None) -> dict:
    """cluster -> pretrain -> finetune -> evaluate, all in memory."""
    g, space, model = stage_cluster(cfg)
    cache = SubgraphCache(g, cfg.m)
    stage_pretrain(cfg, g, model, cache, metrics_path)
    losses = []
    stage_finetune(cfg, g, model, cache, metrics_path, history=losses)
    rep, sp = stage_evaluate(cfg, model, g.relation_vocab)
    return {"graph": g, "space": space, "model": model, "report": rep, "pool": sp,
            "finetune_losses": losses}


# --- unseen-relation protocol ----------------------------------------------------

@dataclass
class UnseenRow:
    triplet: tuple[str, str, str]
    label: int
    score: float
    cluster: int
    cluster_members: list[str]


def unseen_relation_protocol(g_full: KnowledgeGraph, held_out: str, cfg: RunConfig,
                             override: int | None = None, metrics_path=None) -> tuple[list[UnseenRow], dict]:
    """Train without one relation, then score its triplets with the encoder of the cluster it is assigned.

    Each held-out triplet is paired with one corruption (label -1). Returns
    the per-triplet rows and a summary with the assigned cluster and the
    fraction of positives scored above their paired corruption.
    """
    if held_out not in g_full.relation_vocab:
        raise ConfigError(f"relation {held_out!r} is not in the training graph")
    r_u = g_full.relation_vocab[held_out]
    held = [t for t in g_full.triplets if t.rel == r_u]
    if not held:
        raise ConfigError(f"relation {held_out!r} has no triplets")
    g = g_full.without(lambda t: t.rel == r_u)
    space = relation_space(g, cfg, exclude={r_u})
    cm = space.cluster_model
    if override is not None and override >= 0:
        if override >= cm.n_c:
            raise ConfigError(f"cluster override {override} out of range (n_c = {cm.n_c})")
        c_u = override
    else:
        try:
            c_u = assign_unseen(space.semantics.R_glo[r_u], cm)
        except ClusterError as exc:
            raise ConfigError(f"{held_out}: {exc}") from None
    model = new_model(cfg, cm, g.n_relations)
    cache = SubgraphCache(g, cfg.m)
    stage_pretrain(cfg, g, model, cache, metrics_path)
    stage_finetune(cfg, g, model, cache, metrics_path)

    enc = model.encoders[c_u]
    rng = np.random.default_rng(cfg.stage_seed("eval"))
    names = g.relation_vocab.names
    members = [names[r] for r in cm.members(c_u)]
    rows, wins, n_pairs, skipped = [], 0, 0, 0
    with no_grad():
        for t in held:
            sg = cache(t)
            if sg is None:
                skipped += 1
                continue
            neg = sg_n = None
            for _ in range(100):
                neg = corrupt(t, g, rng, "either", True, known=g_full.triplet_set)
                sg_n = cache(neg)
                if sg_n is not None:
                    break
            s_pos = _score(sg, enc, cfg)
            rows.append(UnseenRow(g_full.names(t), 1, s_pos, c_u, members))
            if sg_n is None:
                continue
            s_neg = _score(sg_n, enc, cfg)
            rows.append(UnseenRow(g_full.names(neg), -1, s_neg, c_u, members))
            n_pairs += 1
            wins += s_pos > s_neg
    summary = {"relation": held_out, "cluster": c_u, "members": members, "n_positive": len(held),
               "n_skipped_empty": skipped, "n_pairs": n_pairs,
               "pair_accuracy": wins / n_pairs if n_pairs else float("nan")}
    return rows, summary


def _score(sg, enc, cfg):
    from .encoder import score
    return score(encode(sg, enc, cfg.aggregation), enc).item()


def write_unseen_csv(path, rows: list[UnseenRow]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["head", "relation", "tail", "label", "score", "prediction", "cluster_id",
                    "relations_in_same_cluster"])
        for r in rows:
            pred = 1 if r.score > 0 else -1
            w.writerow([*r.triplet, r.label, f"{r.score:.6f}", pred, r.cluster, ";".join(r.cluster_members)])


# --- representation export ----------------------------------------------------

def export_plot(g: KnowledgeGraph, model: ModelState, cfg: RunConfig) -> list[tuple[float, float, int, str]]:
    """2-D t-SNE of the flattened representation of every non-empty training triplet."""
    cache = SubgraphCache(g, cfg.m)
    cache.prefetch(g.triplets, cfg.threads)
    feats, meta = [], []
    with no_grad():
        for t in g.triplets:
            sg = cache(t)
            if sg is None:
                continue
            c = model.cluster_model.cluster_of(t.rel)
            feats.append(encode(sg, model.encoders[c], cfg.aggregation).data.ravel())
            meta.append((c, g.relation_vocab.name(t.rel)))
    if not feats:
        return []
    X = np.array(feats)
    tc = cfg.tsne_config()
    tc.d_r = 2
    tc.seed = cfg.stage_seed("plot")
    try:
        Y = tsne(X, tc).R
    except TsneError:
        Y = pca(X, 2)
    return [(float(Y[i, 0]), float(Y[i, 1]), c, name) for i, (c, name) in enumerate(meta)]


def write_plot_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "cluster_id", "relation"])
        for x, y, c, name in rows:
            w.writerow([f"{x:.6f}", f"{y:.6f}", c, name])
