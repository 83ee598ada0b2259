"""Contrastive pre-training and soft-margin fine-tuning of the per-cluster encoders."""
from __future__ import annotations

import csv
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cluster import ClusterModel, sample_from_cluster
from .encoder import EncoderParams, encode, score
from .kg import CorruptionError, KnowledgeGraph, Triplet, corrupt
from .subgraph import SubgraphCache

log = logging.getLogger(__name__)

ABLATIONS = ("none", "random-clusters", "no-pretrain", "no-positive", "no-negative")
EMPTY_RETRIES = 10


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    tau: float = 0.5
    m: int = 3
    d: int = 32
    K: int = 3
    n_c: int = 5
    epochs_pretrain: int = 10
    epochs_finetune: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    negatives_per_positive_finetune: int = 1
    filtered_corruption: bool = True
    include_positive_in_denominator: bool = False
    sim_mode: str = "flatten"
    aggregation: str = "sum"
    ablation: str = "none"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        for k in ("m", "d", "K", "batch_size", "negatives_per_positive_finetune"):
            if getattr(self, k) < 1:
                raise ValueError(f"{k} must be at least 1")
        if self.sim_mode not in ("flatten", "mean_rows"):
            raise ValueError("sim_mode must be flatten or mean_rows")


@dataclass
class ModelState:
    cluster_model: ClusterModel
    encoders: list[EncoderParams]

    def __post_init__(self):
        if len(self.encoders) != self.cluster_model.n_c:
            raise ValueError(f"{len(self.encoders)} encoders for {self.cluster_model.n_c} clusters")

    def encoder_for(self, rel: int) -> EncoderParams:
        return self.encoders[self.cluster_model.cluster_of(rel)]


class Adam:
    """Adam with per-parameter step counts; parameters without a gradient are left untouched."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state: dict[int, list] = {}

    def step(self, params):
        for p in params:
            g = p.grad
            if g is None:
                continue
            st = self.state.get(id(p))
            if st is None:
                st = self.state[id(p)] = [0, np.zeros_like(p.data), np.zeros_like(p.data)]
            st[0] += 1
            t, m, v = st
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1 ** t)
            vhat = v / (1 - self.beta2 ** t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
            p.grad = None


# --- losses -----------------------------------------------------------------

def similarity(H1: Tensor, H2: Tensor, mode: str = "flatten") -> Tensor:
    if mode == "flatten":
        return ad.cosine_sim(H1, H2)
    rows = [ad.cosine_sim(ad.row(H1, i), ad.row(H2, i)) for i in range(H1.shape[0])]
    return ad.scale(ad.add_scalars(rows), 1.0 / len(rows))


def contrastive_loss(H_tar: Tensor, H_pos: Tensor | None, H_negs: list[Tensor], tau: float,
                     ablation: str = "none", include_positive: bool = False,
                     sim_mode: str = "flatten") -> Tensor:
    """-log of exp(sim(tar, pos)/tau) over the sum of exp(sim(tar, neg_j)/tau).

    The positive is left out of the denominator unless ``include_positive``.
    Ablations: ``no-positive`` puts sim(tar, tar) = 1 in the numerator,
    ``no-negative`` drops the denominator.
    """
    if ablation == "no-positive":
        s_pos = Tensor(1.0)
    else:
        s_pos = similarity(H_tar, H_pos, sim_mode)
    num = ad.scale(s_pos, -1.0 / tau)
    if ablation == "no-negative":
        return num
    if not H_negs:
        raise ValueError("contrastive loss needs at least one negative")
    terms = [ad.scale(similarity(H_tar, h, sim_mode), 1.0 / tau) for h in H_negs]
    if include_positive:
        terms.append(ad.scale(s_pos, 1.0 / tau))
    return ad.add(num, ad.logsumexp_over(terms))


def soft_margin_loss(s: Tensor, label: int) -> Tensor:
    """ln(1 + exp(-label * score))."""
    if label not in (1, -1):
        raise ValueError("label must be +1 or -1")
    return ad.softplus(ad.scale(s, -float(label)))


# --- loops ------------------------------------------------------------------

def _all_params(model: ModelState):
    return [p for enc in model.encoders for p in enc.parameters()]


def _first_nonempty(draw, cache, retries=EMPTY_RETRIES, first=None):
    """Draw until a sample has a non-empty subgraph; (None, None) after ``retries`` draws."""
    for i in range(retries):
        t = first if (i == 0 and first is not None) else draw()
        if t is None:
            return None, None
        sg = cache(t)
        if sg is not None:
            return t, sg
    return None, None


def check_clusters_usable(g: KnowledgeGraph, model: ModelState, cache: SubgraphCache):
    cm = model.cluster_model
    ok = set()
    for t in g.triplets:
        c = int(cm.assignment[t.rel])
        if c >= 0 and c not in ok and cache(t) is not None:
            ok.add(c)
    missing = [c for c in range(cm.n_c) if c not in ok]
    if missing:
        raise TrainingError(f"clusters {missing} have no training triplet with a non-empty subgraph")


def _log_epoch(phase, epoch, loss, secs, writer):
    print(f"{phase} epoch {epoch} loss {loss:.6f} time {secs:.2f}s", flush=True)
    if writer is not None:
        writer.writerow([phase, epoch, f"{loss:.10g}", f"{secs:.3f}"])


def pretrain_step(batch, g, model, cfg, cache, rng, opt) -> float | None:
    """One optimizer step of contrastive loss over a batch of target triplets."""
    cm = model.cluster_model
    losses = []
    for tgt in batch:
        sg_t = cache(tgt)
        if sg_t is None:
            continue
        c_t = cm.cluster_of(tgt.rel)
        pos = sg_p = None
        if cfg.ablation != "no-positive":
            first = sample_from_cluster(c_t, g, cm, rng, exclude=tgt)
            if first is None:
                pos, sg_p = tgt, sg_t  # nothing else in the cluster: self-positive
            else:
                pos, sg_p = _first_nonempty(lambda: sample_from_cluster(c_t, g, cm, rng, exclude=tgt),
                                            cache, first=first)
                if pos is None:
                    continue
        negs = []
        if cfg.ablation != "no-negative":
            for c in range(cm.n_c):
                if c == c_t:
                    continue
                t, sg = _first_nonempty(lambda: sample_from_cluster(c, g, cm, rng), cache)
                if t is not None:
                    negs.append((t, sg))
            if not negs:
                continue
        H_t = encode(sg_t, model.encoders[c_t], cfg.aggregation)
        H_p = encode(sg_p, model.encoders[cm.cluster_of(pos.rel)], cfg.aggregation) if pos else None
        H_n = [encode(sg, model.encoders[cm.cluster_of(t.rel)], cfg.aggregation) for t, sg in negs]
        losses.append(contrastive_loss(H_t, H_p, H_n, cfg.tau, cfg.ablation,
                                       cfg.include_positive_in_denominator, cfg.sim_mode))
    if not losses:
        return None
    loss = ad.scale(ad.add_scalars(losses), 1.0 / len(losses))
    ad.backward(loss)
    opt.step(_all_params(model))
    return loss.item()


def pretrain(g: KnowledgeGraph, model: ModelState, cfg: TrainConfig, cache: SubgraphCache | None = None,
             metrics_path=None, seed: int | None = None) -> ModelState:
    if cfg.ablation == "no-pretrain":
        return model
    cache = cache or SubgraphCache(g, cfg.m)
    cache.prefetch(g.triplets, cfg.threads)
    if g.triplets:
        check_clusters_usable(g, model, cache)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    with _metrics_writer(metrics_path) as writer:
        for epoch in range(1, cfg.epochs_pretrain + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(g.triplets))
            vals = []
            for i in range(0, len(order), cfg.batch_size):
                batch = [g.triplets[j] for j in order[i:i + cfg.batch_size]]
                v = pretrain_step(batch, g, model, cfg, cache, rng, opt)
                if v is not None:
                    vals.append(v)
            _log_epoch("pretrain", epoch, float(np.mean(vals)) if vals else float("nan"),
                       time.perf_counter() - t0, writer)
    return model


def _corrupt_nonempty(t, g, cache, rng, filtered, known=None):
    last = None
    for _ in range(EMPTY_RETRIES):
        try:
            c = corrupt(t, g, rng, "either", filtered, known=known)
        except CorruptionError:
            return None, None
        last = c
        sg = cache(c)
        if sg is not None:
            return c, sg
    return last, None


def finetune_step(batch, g, model, cfg, cache, rng, opt) -> float | None:
    losses = []
    for pos in batch:
        sg = cache(pos)
        if sg is None:
            continue
        enc = model.encoder_for(pos.rel)
        losses.append(soft_margin_loss(score(encode(sg, enc, cfg.aggregation), enc), 1))
        for _ in range(cfg.negatives_per_positive_finetune):
            neg, sg_n = _corrupt_nonempty(pos, g, cache, rng, cfg.filtered_corruption)
            if sg_n is None:
                continue
            losses.append(soft_margin_loss(score(encode(sg_n, enc, cfg.aggregation), enc), -1))
    if not losses:
        return None
    loss = ad.scale(ad.add_scalars(losses), 1.0 / len(losses))
    ad.backward(loss)
    opt.step(_all_params(model))
    return loss.item()


def finetune(g: KnowledgeGraph, model: ModelState, cfg: TrainConfig, cache: SubgraphCache | None = None,
             metrics_path=None, seed: int | None = None, history: list | None = None) -> ModelState:
    cache = cache or SubgraphCache(g, cfg.m)
    cache.prefetch(g.triplets, cfg.threads)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    with _metrics_writer(metrics_path) as writer:
        for epoch in range(1, cfg.epochs_finetune + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(g.triplets))
            vals = []
            for i in range(0, len(order), cfg.batch_size):
                batch = [g.triplets[j] for j in order[i:i + cfg.batch_size]]
                v = finetune_step(batch, g, model, cfg, cache, rng, opt)
                if v is not None:
                    vals.append(v)
            mean = float(np.mean(vals)) if vals else float("nan")
            if history is not None:
                history.append(mean)
            _log_epoch("finetune", epoch, mean, time.perf_counter() - t0, writer)
    return model


@contextmanager
def _metrics_writer(path):
    if path is None:
        yield None
        return
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["phase", "epoch", "mean_loss", "seconds"])
        yield w
