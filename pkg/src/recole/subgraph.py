"""Directed enclosing subgraphs around a target triplet."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .kg import KnowledgeGraph, Triplet


@dataclass
class Subgraph:
    nodes: list[int]                       # original entity ids, local index = position
    edges: list[tuple[int, int, int]]      # (head_local, rel, tail_local)
    head_local: int
    tail_local: int
    m: int
    n_r: int
    d_h: np.ndarray = field(default=None, repr=False)   # clamped distance from the head
    d_t: np.ndarray = field(default=None, repr=False)   # clamped distance to the tail
    N: np.ndarray = field(default=None, repr=False)
    E: sp.csr_matrix = field(default=None, repr=False)
    A_he: sp.csr_matrix = field(default=None, repr=False)
    A_te: sp.csr_matrix = field(default=None, repr=False)
    A_he_T: sp.csr_matrix = field(default=None, repr=False)
    A_te_T: sp.csr_matrix = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def to_text(self, g: KnowledgeGraph | None = None) -> str:
        ent = (lambda i: g.entity_vocab.name(self.nodes[i])) if g else (lambda i: str(self.nodes[i]))
        rel = (lambda r: g.relation_vocab.name(r)) if g else str
        lines = ["{", f'  "m": {self.m},', f'  "head": "{ent(self.head_local)}",',
                 f'  "tail": "{ent(self.tail_local)}",', '  "nodes": [']
        for i in range(self.n_nodes):
            sep = "," if i + 1 < self.n_nodes else ""
            lines.append(f'    {{"local": {i}, "entity": "{ent(i)}", '
                         f'"d_h": {int(self.d_h[i])}, "d_t": {int(self.d_t[i])}}}{sep}')
        lines.append("  ],")
        lines.append('  "edges": [')
        for j, (a, r, b) in enumerate(self.edges):
            sep = "," if j + 1 < self.n_edges else ""
            lines.append(f'    ["{ent(a)}", "{rel(r)}", "{ent(b)}"]{sep}')
        lines.append("  ]")
        lines.append("}")
        return "\n".join(lines)


def _bfs(start: int, adj, m: int, skip) -> dict[int, int]:
    dist = {start: 0}
    frontier = [start]
    for k in range(1, m + 1):
        nxt = []
        for u in frontier:
            for r, v, _ in adj[u]:
                if v in dist or skip(u, r, v):
                    continue
                dist[v] = k
                nxt.append(v)
        frontier = nxt
    return dist


def neighbourhoods(g: KnowledgeGraph, target: Triplet, m: int) -> tuple[dict, dict]:
    """m-hop out-neighbourhood of the head and in-neighbourhood of the tail.

    Both searches ignore the target edge itself, so in-graph positives and
    out-of-graph corruptions are treated alike.
    """
    h, r0, t = target
    out_d = _bfs(h, g.out_index, m, lambda u, r, v: u == h and r == r0 and v == t)
    in_d = _bfs(t, g.in_index, m, lambda u, r, v: u == t and r == r0 and v == h)
    return out_d, in_d


def extract(g: KnowledgeGraph, target: Triplet, m: int, label: bool = True) -> Subgraph | None:
    """Induced subgraph on (out-hood of h) ∩ (in-hood of t) ∪ {h, t}, target edge removed.

    Returns None (the Empty result) when no edge survives.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    h, r0, t = target
    out_d, in_d = neighbourhoods(g, target, m)
    keep = {v for v in out_d if v in in_d}
    keep.add(h)
    keep.add(t)
    # canonical order: BFS level from h, then entity id; nodes not reached from h last
    far = m + 1
    order = sorted(keep, key=lambda v: (0 if v == h else 1, out_d.get(v, far), v))
    local = {v: i for i, v in enumerate(order)}
    edges = []
    for u in order:
        for r, v, _ in g.out_index[u]:
            if v in local and not (u == h and r == r0 and v == t):
                edges.append((local[u], r, local[v]))
    if not edges:
        return None
    edges.sort(key=lambda e: (e[0], e[2], e[1]))
    sg = Subgraph(order, edges, local[h], local[t], m, g.n_relations)
    if label:
        sg.N = label_nodes(sg)
        build_incidence(sg)
    return sg


def subgraph_distances(sg: Subgraph) -> tuple[np.ndarray, np.ndarray]:
    n = sg.n_nodes
    fwd = [[] for _ in range(n)]
    bwd = [[] for _ in range(n)]
    for a, _, b in sg.edges:
        fwd[a].append(b)
        bwd[b].append(a)
    cap = sg.m + 1

    def bfs(src, adj):
        d = np.full(n, cap, dtype=np.int64)
        d[src] = 0
        q = deque([src])
        while q:
            u = q.popleft()
            if d[u] >= cap - 1:
                continue
            for v in adj[u]:
                if d[v] > d[u] + 1:
                    d[v] = d[u] + 1
                    q.append(v)
        return d

    return bfs(sg.head_local, fwd), bfs(sg.tail_local, bwd)


def label_nodes(sg: Subgraph) -> np.ndarray:
    """One-hot(distance from h) ⊕ one-hot(distance to t), each of width m + 2."""
    d_h, d_t = subgraph_distances(sg)
    sg.d_h, sg.d_t = d_h, d_t
    w = sg.m + 2
    N = np.zeros((sg.n_nodes, 2 * w))
    rows = np.arange(sg.n_nodes)
    N[rows, d_h] = 1.0
    N[rows, w + d_t] = 1.0
    return N


def build_incidence(sg: Subgraph):
    """Fill A_he, A_te (n_o x n_e) and the one-hot edge matrix E (n_e x n_r)."""
    n_o, n_e = sg.n_nodes, sg.n_edges
    heads = np.array([e[0] for e in sg.edges], dtype=np.int64)
    tails = np.array([e[2] for e in sg.edges], dtype=np.int64)
    rels = np.array([e[1] for e in sg.edges], dtype=np.int64)
    cols = np.arange(n_e)
    ones = np.ones(n_e)
    sg.A_he = sp.csr_matrix((ones, (heads, cols)), shape=(n_o, n_e))
    sg.A_te = sp.csr_matrix((ones, (tails, cols)), shape=(n_o, n_e))
    sg.A_he_T = sg.A_he.T.tocsr()
    sg.A_te_T = sg.A_te.T.tocsr()
    sg.E = sp.csr_matrix((ones, (cols, rels)), shape=(n_e, sg.n_r))
    return sg.A_he, sg.A_te, sg.E


class SubgraphCache:
    """Memoised extract() for one graph and hop budget."""

    def __init__(self, g: KnowledgeGraph, m: int):
        self.g = g
        self.m = m
        self._cache: dict[Triplet, Subgraph | None] = {}

    def __call__(self, t: Triplet) -> Subgraph | None:
        t = Triplet(*t)
        try:
            return self._cache[t]
        except KeyError:
            sg = self._cache[t] = extract(self.g, t, self.m)
            return sg

    def prefetch(self, triplets, threads: int = 1):
        todo = [Triplet(*t) for t in triplets if Triplet(*t) not in self._cache]
        if threads > 1 and len(todo) > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(threads) as ex:
                for t, sg in zip(todo, ex.map(lambda x: extract(self.g, x, self.m), todo)):
                    self._cache[t] = sg
        else:
            for t in todo:
                self(t)
