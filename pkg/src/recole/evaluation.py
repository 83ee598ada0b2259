"""Ranking metrics, negative pools and the long-tail / unseen-relation protocols."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .encoder import EncoderParams, encode, score
from .kg import CorruptionError, KnowledgeGraph, Triplet, corrupt, relation_frequency
from .subgraph import SubgraphCache

HITS_NEGATIVES = 50
POOL_RETRIES = 100


class MetricError(ValueError):
    pass


# --- metrics ----------------------------------------------------------------

def auc_pr(pos_scores, neg_scores) -> float:
    """Average precision; tied scores form one threshold step.

    Each positive contributes the precision measured at the bottom of its tie
    group, i.e. over every item scoring at least as high as it does.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0:
        raise MetricError("average precision needs at least one positive")
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # last index of every tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    n_items = ends + 1
    tp_in_group = np.diff(np.r_[0.0, tp])
    return float(np.sum(tp_in_group * tp / n_items) / pos.size)


def auc_roc(pos_scores, neg_scores) -> float:
    """P(pos > neg) + P(pos = neg) / 2 via average ranks."""
    from scipy.stats import rankdata

    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise MetricError("AUC-ROC needs positives and negatives")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[:pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def rank_of(pos_score: float, neg_scores) -> int:
    neg = np.asarray(neg_scores, dtype=np.float64)
    return 1 + int(np.sum(neg > pos_score)) + int(np.sum(neg == pos_score))


def hits_at_10(pos_score: float, neg_scores, n_neg: int = HITS_NEGATIVES) -> bool:
    """Pessimistic ties: negatives scoring equal to the positive rank above it."""
    if len(neg_scores) != n_neg:
        raise MetricError(f"expected {n_neg} negative scores, got {len(neg_scores)}")
    return rank_of(pos_score, neg_scores) <= 10


# --- pools ------------------------------------------------------------------

@dataclass
class ScoredPool:
    positives: list = field(default_factory=list)        # (triplet, score)
    negatives: list = field(default_factory=list)        # (triplet, score), paired 1:1 with positives
    hits_negatives: list = field(default_factory=list)   # per positive: list of 50 (triplet, score)
    provenance: str = ""
    n_skipped_empty: int = 0


@dataclass
class EvalReport:
    auc_pr: float
    hits_at_10: float
    auc_roc: float
    n_scored: int
    n_skipped_empty: int
    per_relation: dict = field(default_factory=dict)  # name -> (n, auc_pr, auc_roc, hits)

    def to_text(self) -> str:
        lines = [f"AUC-PR   {self.auc_pr:.4f}",
                 f"Hits@10  {self.hits_at_10:.4f}",
                 f"AUC-ROC  {self.auc_roc:.4f}",
                 f"scored {self.n_scored}  skipped (empty subgraph) {self.n_skipped_empty}"]
        if self.per_relation:
            lines.append("relation  n  auc_pr  auc_roc  hits@10")
            for name, (n, ap, roc, h) in sorted(self.per_relation.items()):
                lines.append(f"{name}  {n}  {ap:.4f}  {roc:.4f}  {h:.4f}")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scope", "n", "auc_pr", "auc_roc", "hits_at_10", "n_skipped_empty"])
            w.writerow(["all", self.n_scored, f"{self.auc_pr:.10g}", f"{self.auc_roc:.10g}",
                        f"{self.hits_at_10:.10g}", self.n_skipped_empty])
            for name, (n, ap, roc, h) in sorted(self.per_relation.items()):
                w.writerow([name, n, f"{ap:.10g}", f"{roc:.10g}", f"{h:.10g}", ""])


def _nonempty_corruption(t, g, cache, rng, known):
    for _ in range(POOL_RETRIES):
        try:
            c = corrupt(t, g, rng, "either", True, known=known)
        except CorruptionError:
            return None
        if cache(c) is not None:
            return c
    return None


def build_pool(queries: list[Triplet], g: KnowledgeGraph, m: int, seed: int,
               n_hits: int = HITS_NEGATIVES, cache: SubgraphCache | None = None,
               known: set | None = None) -> tuple[list, int]:
    """Negatives for every query whose own subgraph is non-empty.

    Returns ([(query, auc_negative, [hits negatives])], n_skipped). Negatives
    are filtered corruptions with non-empty subgraphs; a query for which none
    can be found is skipped along with the empty ones.
    """
    cache = cache or SubgraphCache(g, m)
    rng = np.random.default_rng(seed)
    known = set(known or ()) | set(queries)
    out, skipped = [], 0
    for q in queries:
        if cache(q) is None:
            skipped += 1
            continue
        first = _nonempty_corruption(q, g, cache, rng, known)
        hits = [_nonempty_corruption(q, g, cache, rng, known) for _ in range(n_hits)]
        if first is None or any(h is None for h in hits):
            skipped += 1
            continue
        out.append((q, first, hits))
    return out, skipped


def write_pool(path, pool, g: KnowledgeGraph):
    with open(path, "w", encoding="utf-8") as fh:
        for i, (q, neg, hits) in enumerate(pool):
            for kind, ts in (("query", [q]), ("auc", [neg]), ("hits", hits)):
                for t in ts:
                    fh.write(f"{i}\t{kind}\t" + "\t".join(g.names(t)) + "\n")


def read_pool(path, g: KnowledgeGraph):
    groups: dict[int, list] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            i, kind, h, r, t = line.rstrip("\n").split("\t")
            entry = groups.setdefault(int(i), [None, None, []])
            trip = g.lookup((h, r, t))
            if kind == "query":
                entry[0] = trip
            elif kind == "auc":
                entry[1] = trip
            else:
                entry[2].append(trip)
    return [tuple(groups[i]) for i in sorted(groups)]


def score_triplet(t: Triplet, enc: EncoderParams, cache: SubgraphCache, aggregation="sum") -> float:
    with ad.no_grad():
        return score(encode(cache(t), enc, aggregation), enc).item()


def score_pool(pool, model, cache: SubgraphCache, aggregation="sum", threads: int = 1,
               cluster_override: dict | None = None) -> ScoredPool:
    """Score every query, its AUC negative and its Hits@10 negatives."""
    override = cluster_override or {}

    def enc_for(t):
        c = override.get(t.rel)
        return model.encoders[c] if c is not None else model.encoder_for(t.rel)

    def one(item):
        q, neg, hits = item
        f = lambda t: score_triplet(t, enc_for(t), cache, aggregation)  # noqa: E731
        return (q, f(q)), (neg, f(neg)), [(h, f(h)) for h in hits]

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, pool))
    else:
        results = [one(it) for it in pool]
    sp = ScoredPool()
    for p, n, h in results:
        sp.positives.append(p)
        sp.negatives.append(n)
        sp.hits_negatives.append(h)
    return sp


def report(sp: ScoredPool, g: KnowledgeGraph | None = None) -> EvalReport:
    if not sp.positives:
        raise MetricError("no scored positives")
    ps = [s for _, s in sp.positives]
    ns = [s for _, s in sp.negatives]
    hits = [hits_at_10(s, [x for _, x in hn], len(hn)) for (_, s), hn in
            zip(sp.positives, sp.hits_negatives)]
    per = {}
    if g is not None:
        rels = sorted({t.rel for t, _ in sp.positives})
        for r in rels:
            idx = [i for i, (t, _) in enumerate(sp.positives) if t.rel == r]
            p_r = [ps[i] for i in idx]
            n_r = [ns[i] for i in idx]
            per[g.relation_vocab.name(r)] = (len(idx), auc_pr(p_r, n_r), auc_roc(p_r, n_r),
                                             float(np.mean([hits[i] for i in idx])))
    return EvalReport(auc_pr(ps, ns), float(np.mean(hits)), auc_roc(ps, ns),
                      len(sp.positives), sp.n_skipped_empty, per)


def evaluate(model, g: KnowledgeGraph, queries: list[Triplet], m: int, seed: int,
             aggregation="sum", threads: int = 1, pool=None, known=None) -> tuple[EvalReport, list]:
    cache = SubgraphCache(g, m)
    skipped = 0
    if pool is None:
        pool, skipped = build_pool(queries, g, m, seed, cache=cache, known=known)
    sp = score_pool(pool, model, cache, aggregation, threads)
    sp.n_skipped_empty = skipped if skipped else len(queries) - len(pool)
    sp.provenance = f"seed={seed}"
    return report(sp, g), pool


def long_tail_eval(g_train: KnowledgeGraph, sp: ScoredPool, thresholds) -> dict:
    """threshold -> (auc_roc, auc_pr, n_triplets) over queries whose relation is rarer than it.

    Frequencies come from the training graph; relations are matched by name
    so pools scored on a separate inductive graph work too.
    """
    freq_by_id = relation_frequency(g_train)
    freq = {g_train.relation_vocab.name(r): c for r, c in freq_by_id.items()}
    names = g_train.relation_vocab.names
    out = {}
    for T in thresholds:
        keep = [i for i, (t, _) in enumerate(sp.positives) if freq.get(names[t.rel], 0) < T]
        if not keep:
            out[T] = (None, None, 0)
            continue
        p = [sp.positives[i][1] for i in keep]
        n = [sp.negatives[i][1] for i in keep]
        out[T] = (auc_roc(p, n), auc_pr(p, n), len(keep))
    return out


def write_long_tail(path, table: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "auc_roc", "auc_pr", "n_triplets"])
        for T, (roc, ap, n) in table.items():
            w.writerow([T, "" if roc is None else f"{roc:.10g}", "" if ap is None else f"{ap:.10g}", n])
