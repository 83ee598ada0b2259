"""K-Means over reduced relation embeddings and the cluster-based sampler."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kg import KnowledgeGraph, Triplet

MAX_LLOYD = 300


class ClusterError(ValueError):
    pass


class EmptyClusterError(ClusterError):
    pass


@dataclass
class ClusterModel:
    n_c: int
    assignment: np.ndarray      # relation-id -> cluster-id, -1 for relations left out
    centroids: np.ndarray       # n_c x d_r
    semantic_ref: np.ndarray    # n_r x D word-vector rows
    objective: float
    history: list = field(default_factory=list, repr=False)

    def cluster_of(self, rel: int) -> int:
        c = int(self.assignment[rel])
        if c < 0:
            raise ClusterError(f"relation {rel} has no cluster")
        return c

    def members(self, c: int) -> list[int]:
        return [int(r) for r in np.flatnonzero(self.assignment == c)]


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        if tot > 0:
            nxt = int(rng.choice(n, p=d2 / tot))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[idx].copy()


def _assign(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    D = np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=2)
    lab = np.argmin(D, axis=1)  # first minimum = lowest cluster-id
    return lab, D[np.arange(X.shape[0]), lab]


def _repair(X, C, lab, dist, k):
    for c in range(k):
        if np.any(lab == c):
            continue
        counts = np.bincount(lab, minlength=k)
        movable = counts[lab] > 1
        cand = np.where(movable, dist, -1.0)
        i = int(np.argmax(cand))
        lab[i] = c
        dist[i] = 0.0
        C[c] = X[i]
    return lab


def objective_of(X: np.ndarray, lab: np.ndarray, C: np.ndarray) -> float:
    return float(np.sum((X - C[lab]) ** 2))


def kmeans(R: np.ndarray, n_c: int, seed: int = 0, max_iter: int = MAX_LLOYD
           ) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (labels, centroids, objective, per-iteration objectives).
    """
    X = np.asarray(R, dtype=np.float64)
    n = X.shape[0]
    if n_c < 2:
        raise ClusterError(f"n_c must be at least 2, got {n_c}")
    if n < n_c:
        raise ClusterError(f"cannot form {n_c} clusters from {n} relations")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, n_c, rng)
    lab = None
    history = []
    for _ in range(max_iter):
        new, dist = _assign(X, C)
        new = _repair(X, C, new, dist, n_c)
        if lab is not None and np.array_equal(new, lab):
            break
        lab = new
        for c in range(n_c):
            C[c] = X[lab == c].mean(axis=0)
        history.append(objective_of(X, lab, C))
    return lab, C, history[-1], history


def fit_clusters(R: np.ndarray, R_glo: np.ndarray, n_c: int, seed: int = 0, restarts: int = 1,
                 relations: np.ndarray | None = None) -> ClusterModel:
    """Best-of-``restarts`` K-Means over the rows ``relations`` of R (default: all)."""
    n_r = R.shape[0]
    rel = np.arange(n_r) if relations is None else np.asarray(relations)
    seeds = np.random.SeedSequence(seed).generate_state(max(restarts, 1))
    best = None
    for s in seeds:
        out = kmeans(R[rel], n_c, int(s))
        if best is None or out[2] < best[2]:
            best = out
    lab, C, obj, hist = best
    assignment = np.full(n_r, -1, dtype=np.int64)
    assignment[rel] = lab
    return ClusterModel(n_c, assignment, C, np.asarray(R_glo, dtype=np.float64).copy(), obj, hist)


def random_clusters(R: np.ndarray, R_glo: np.ndarray, n_c: int, seed: int,
                    relations: np.ndarray | None = None) -> ClusterModel:
    """Seeded random relation->cluster assignment (balanced, so no cluster is empty)."""
    n_r = R.shape[0]
    rel = np.arange(n_r) if relations is None else np.asarray(relations)
    if len(rel) < n_c:
        raise ClusterError(f"cannot form {n_c} clusters from {len(rel)} relations")
    rng = np.random.default_rng(seed)
    lab = np.empty(len(rel), dtype=np.int64)
    lab[rng.permutation(len(rel))] = np.arange(len(rel)) % n_c
    assignment = np.full(n_r, -1, dtype=np.int64)
    assignment[rel] = lab
    X = R[rel]
    C = np.stack([X[lab == c].mean(axis=0) for c in range(n_c)])
    return ClusterModel(n_c, assignment, C, np.asarray(R_glo, dtype=np.float64).copy(),
                        objective_of(X, lab, C))


def assign_unseen(vec: np.ndarray, cm: ClusterModel) -> int:
    """Cluster of the nearest clustered relation by cosine similarity in word-vector space."""
    v = np.asarray(vec, dtype=np.float64).ravel()
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ClusterError("relation has a zero semantic vector (no known words); "
                           "supply a manual cluster override")
    ref = cm.semantic_ref
    norms = np.linalg.norm(ref, axis=1)
    ok = (cm.assignment >= 0) & (norms > 0)
    if not ok.any():
        raise ClusterError("cluster model has no usable semantic reference rows")
    sims = np.full(ref.shape[0], -np.inf)
    sims[ok] = (ref[ok] @ v) / (norms[ok] * nv)
    return int(cm.assignment[int(np.argmax(sims))])


def _triplet_count(g: KnowledgeGraph, r: int) -> int:
    return len(g.by_relation[r]) if r < len(g.by_relation) else 0


def sample_from_cluster(c: int, g: KnowledgeGraph, cm: ClusterModel, rng: np.random.Generator,
                        exclude: Triplet | None = None) -> Triplet | None:
    """Uniform relation in cluster ``c`` (among those with triplets), then a uniform triplet.

    ``exclude`` is never returned; None when nothing is left to draw.
    """
    rels = []
    for r in cm.members(c):
        k = _triplet_count(g, r)
        if exclude is not None and r == exclude.rel and exclude in g.triplet_set:
            k -= 1
        if k > 0:
            rels.append(r)
    if not rels:
        return None
    r = rels[int(rng.integers(len(rels)))]
    ids = g.by_relation[r]
    if exclude is not None and r == exclude.rel:
        ids = [e for e in ids if g.triplets[e] != exclude]
    return g.triplets[ids[int(rng.integers(len(ids)))]]


def sample_positive(target: Triplet, g: KnowledgeGraph, cm: ClusterModel,
                    rng: np.random.Generator) -> Triplet:
    c = cm.cluster_of(target.rel)
    t = sample_from_cluster(c, g, cm, rng, exclude=target)
    if t is not None:
        return t
    if any(_triplet_count(g, r) for r in cm.members(c)):
        return target  # only the target itself is available
    raise EmptyClusterError(f"cluster {c} has no triplets")


def sample_negatives(target: Triplet, g: KnowledgeGraph, cm: ClusterModel,
                     rng: np.random.Generator) -> list[Triplet]:
    c0 = cm.cluster_of(target.rel)
    out = []
    for c in range(cm.n_c):
        if c == c0:
            continue
        t = sample_from_cluster(c, g, cm, rng)
        if t is None:
            raise EmptyClusterError(f"cluster {c} has no triplets to draw a negative from")
        out.append(t)
    return out
