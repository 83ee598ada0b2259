"""Slow, obviously-correct reference implementations used by the tests."""
from __future__ import annotations

import itertools

import numpy as np

from recole.kg import build_graph


def random_kg(rng, max_nodes=30, max_edges=120, max_rel=3, min_edges=1):
    n = int(rng.integers(2, max_nodes + 1))
    n_rel = int(rng.integers(1, max_rel + 1))
    n_e = int(rng.integers(min_edges, max_edges + 1))
    raw = [(f"e{rng.integers(n)}", f"r{rng.integers(n_rel)}", f"e{rng.integers(n)}") for _ in range(n_e)]
    return build_graph(raw)


# --- subgraphs --------------------------------------------------------------

def walk_endpoints(edges, start, m, forward=True):
    """Every node at the end of a directed walk of length <= m from ``start`` (walks enumerated)."""
    seen = {start}

    def go(u, depth):
        if depth == m:
            return
        for a, _, b in edges:
            src, dst = (a, b) if forward else (b, a)
            if src == u:
                seen.add(dst)
                go(dst, depth + 1)

    go(start, 0)
    return seen


def subgraph_oracle(triplets, target, m):
    """(node set, edge multiset, {node: (d_h, d_t)}) or None for the empty case."""
    h, r0, t = target
    edges = [tuple(e) for e in triplets if tuple(e) != tuple(target)]
    nodes = (walk_endpoints(edges, h, m) & walk_endpoints(edges, t, m, forward=False)) | {h, t}
    inner = [e for e in edges if e[0] in nodes and e[2] in nodes]
    if not inner:
        return None
    # Floyd-Warshall inside the induced subgraph
    idx = sorted(nodes)
    pos = {v: i for i, v in enumerate(idx)}
    INF = 10 ** 9
    D = np.full((len(idx), len(idx)), INF, dtype=np.int64)
    np.fill_diagonal(D, 0)
    for a, _, b in inner:
        if a != b:
            D[pos[a], pos[b]] = 1
    for k in range(len(idx)):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    cap = m + 1
    labels = {v: (min(int(D[pos[h], pos[v]]), cap), min(int(D[pos[v], pos[t]]), cap)) for v in nodes}
    return nodes, sorted(inner), labels


# --- finite differences -----------------------------------------------------

def fd_grad(f, arr, h=1e-5):
    """Central differences of scalar f() w.r.t. every entry of ``arr`` (modified in place, restored)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def grad_error(g_a, g_fd):
    return float(np.max(np.abs(g_a - g_fd) / np.maximum(1.0, np.abs(g_a)))) if g_a.size else 0.0


# --- metrics ----------------------------------------------------------------

def ap_oracle(pos, neg):
    """Each positive contributes precision over everything scoring >= it."""
    allv = list(pos) + list(neg)
    precs = []
    for p in pos:
        above = [s for s in allv if s >= p]
        tp = sum(1 for s in pos if s >= p)
        precs.append(tp / len(above))
    return sum(precs) / len(precs)


def roc_oracle(pos, neg):
    tot = 0.0
    for p in pos:
        for q in neg:
            tot += 1.0 if p > q else (0.5 if p == q else 0.0)
    return tot / (len(pos) * len(neg))


def rank_oracle(pos, negs):
    # ties placed ahead of the positive
    ordered = sorted([(s, 1) for s in negs] + [(pos, 0)], key=lambda x: (-x[0], -x[1]))
    return ordered.index((pos, 0)) + 1


# --- k-means ----------------------------------------------------------------

def best_two_partition(X):
    n = X.shape[0]
    best = np.inf
    for bits in itertools.product((0, 1), repeat=n - 1):
        lab = np.array((0,) + bits)
        if lab.min() == lab.max():
            continue
        obj = sum(float(np.sum((X[lab == c] - X[lab == c].mean(axis=0)) ** 2)) for c in (0, 1))
        best = min(best, obj)
    return best


# --- segmentation -----------------------------------------------------------

def dp_segment(s, vocab, min_len=2):
    """Fewest-token exact cover of ``s`` by vocabulary words (None if impossible)."""
    best = [None] * (len(s) + 1)
    best[0] = []
    for j in range(1, len(s) + 1):
        for i in range(0, j - min_len + 1):
            if best[i] is not None and s[i:j] in vocab:
                cand = best[i] + [s[i:j]]
                if best[j] is None or len(cand) < len(best[j]):
                    best[j] = cand
    return best[len(s)]


# --- encoder ----------------------------------------------------------------

def dense_encode(N, E1, A_he, A_te, params, head, tail):
    """Straight-line dense evaluation of the message passing, one equation per line."""
    Nk = N @ params["W_n"]
    Ek = E1 @ params["W_e"]
    N0 = Nk
    K = sum(1 for k in params if k.startswith("W_") and k[2:].isdigit())
    for k in range(K):
        Ek = Ek + A_he.T @ Nk + A_te.T @ Nk
        Nk = np.maximum((A_he @ Ek + A_te @ Ek + Nk) @ params[f"W_{k}"] + params[f"b_{k}"], 0.0)
    V = N0 + Nk
    return np.vstack([V[head], V[tail]])
