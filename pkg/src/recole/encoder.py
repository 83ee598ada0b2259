"""Per-cluster relational message-passing encoder and its scoring head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .subgraph import Subgraph


class EmptySubgraphError(ValueError):
    pass


@dataclass
class EncoderParams:
    W_n: Tensor                     # 2(m+2) x d
    W_e: Tensor                     # n_r x d
    layers: list[tuple[Tensor, Tensor]]  # K x (W_k: d x d, b_k: 1 x d)
    head_w: Tensor                  # 2d x 1
    head_b: Tensor                  # 1 x 1

    def named(self) -> list[tuple[str, Tensor]]:
        out = [("W_n", self.W_n), ("W_e", self.W_e)]
        for k, (W, b) in enumerate(self.layers):
            out.append((f"W_{k}", W))
            out.append((f"b_{k}", b))
        out.append(("head_w", self.head_w))
        out.append(("head_b", self.head_b))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named()]

    @property
    def d(self) -> int:
        return self.W_n.shape[1]

    @property
    def K(self) -> int:
        return len(self.layers)

    @classmethod
    def from_named(cls, named: dict[str, np.ndarray]) -> "EncoderParams":
        K = sum(1 for k in named if k.startswith("W_") and k[2:].isdigit())
        p = lambda a: Tensor(a, requires_grad=True)  # noqa: E731
        return cls(p(named["W_n"]), p(named["W_e"]),
                   [(p(named[f"W_{k}"]), p(named[f"b_{k}"])) for k in range(K)],
                   p(named["head_w"]), p(named["head_b"]))

    def copy(self) -> "EncoderParams":
        return EncoderParams.from_named({k: t.data.copy() for k, t in self.named()})


def _glorot(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(m: int, n_r: int, d: int, K: int, seed: int) -> EncoderParams:
    if d < 1 or K < 1:
        raise ValueError("d and K must be at least 1")
    rng = np.random.default_rng(seed)
    w_node = 2 * (m + 2)
    p = lambda a: Tensor(a, requires_grad=True)  # noqa: E731
    W_n = p(_glorot(rng, w_node, d))
    W_e = p(_glorot(rng, n_r, d))
    layers = [(p(_glorot(rng, d, d)), p(np.zeros((1, d)))) for _ in range(K)]
    head_w = p(_glorot(rng, 2 * d, 1))
    return EncoderParams(W_n, W_e, layers, head_w, p(np.zeros((1, 1))))


def init_encoders(n_c: int, m: int, n_r: int, d: int, K: int, seed: int) -> list[EncoderParams]:
    seeds = np.random.SeedSequence(seed).generate_state(n_c)
    return [init_params(m, n_r, d, K, int(s)) for s in seeds]


def _mean_operators(sg: Subgraph):
    """Degree-normalised incidence operators for the mean-aggregation variant."""
    deg = np.asarray(sg.A_he.sum(axis=1) + sg.A_te.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / np.maximum(deg, 1.0))
    node_in = (inv @ (sg.A_he + sg.A_te)).tocsr()
    edge_in = (0.5 * (sg.A_he_T + sg.A_te_T)).tocsr()
    return node_in, edge_in


def encode(sg: Subgraph | None, p: EncoderParams, aggregation: str = "sum") -> Tensor:
    """Graph representation H (2 x d): rows are the target head and tail embeddings."""
    if sg is None or sg.n_edges == 0:
        raise EmptySubgraphError("cannot encode an empty subgraph")
    N0 = ad.matmul(Tensor(sg.N), p.W_n)
    E = ad.spmm(sg.E, p.W_e)
    N = N0
    if aggregation == "sum":
        for W, b in p.layers:
            E = ad.add(ad.add(E, ad.spmm(sg.A_he_T, N, sg.A_he)), ad.spmm(sg.A_te_T, N, sg.A_te))
            msg = ad.add(ad.add(ad.spmm(sg.A_he, E, sg.A_he_T), ad.spmm(sg.A_te, E, sg.A_te_T)), N)
            N = ad.relu(ad.add(ad.matmul(msg, W), b))
    elif aggregation == "mean":
        node_in, edge_in = _mean_operators(sg)
        for W, b in p.layers:
            E = ad.add(E, ad.spmm(edge_in, N))
            msg = ad.add(ad.spmm(node_in, E), N)
            N = ad.relu(ad.add(ad.matmul(msg, W), b))
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    V = ad.add(N0, N)
    return ad.concat_rows(ad.row(V, sg.head_local), ad.row(V, sg.tail_local))


def score(H: Tensor, p: EncoderParams) -> Tensor:
    """Fully connected head on the row-major flattened representation."""
    return ad.add(ad.matmul(ad.flatten(H), p.head_w), p.head_b)
