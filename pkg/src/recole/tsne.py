"""Exact t-SNE (plus a PCA fallback) for reducing relation word vectors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ENTROPY_TOL = 1e-5
MAX_BISECT = 200


class TsneError(ValueError):
    pass


@dataclass
class TsneConfig:
    d_r: int = 2
    perplexity: float = 30.0
    iters: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    seed: int = 0


@dataclass
class ReducedEmbedding:
    R: np.ndarray
    final_kl: float
    first_kl: float = float("nan")  # KL at the first iterate without exaggeration
    kl_history: list = field(default_factory=list, repr=False)


def effective_perplexity(perplexity: float, n: int) -> float:
    return min(perplexity, (n - 1) / 3.0)


def _sq_dists(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_entropy(d: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    # d excludes the self-distance; shift by the minimum for stability
    p = np.exp(-(d - d.min()) * beta)
    s = p.sum()
    p /= s
    nz = p > 0
    H = -np.sum(p[nz] * np.log2(p[nz]))
    return H, p


def conditional_affinities(X: np.ndarray, perplexity: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic P_{j|i} with each row's entropy calibrated to log2(perplexity).

    Returns (P_cond, betas) where beta_i = 1 / (2 sigma_i^2).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    D = _sq_dists(X)
    target = np.log2(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        d = np.delete(D[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        # scale the starting point to the data so the bisection starts nearby
        spread = np.mean(d - d.min())
        if spread > 0:
            beta = 1.0 / spread
        for _ in range(MAX_BISECT):
            H, p = _row_entropy(d, beta)
            diff = H - target
            if abs(diff) < ENTROPY_TOL:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        betas[i] = beta
        P[i, np.arange(n) != i] = p
    return P, betas


def pairwise_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    n = np.asarray(X).shape[0]
    if n < 4:
        raise TsneError(f"t-SNE needs at least 4 points, got {n}")
    Pc, _ = conditional_affinities(X, perplexity)
    P = (Pc + Pc.T) / (2.0 * n)
    P = (P + P.T) / 2.0  # exact symmetry after rounding
    np.fill_diagonal(P, 0.0)
    return P


def _q(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + _sq_dists(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    m = P > 0
    return float(np.sum(P[m] * np.log(P[m] / np.maximum(Q[m], 1e-300))))


def tsne(X: np.ndarray, cfg: TsneConfig | None = None) -> ReducedEmbedding:
    cfg = cfg or TsneConfig()
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 4:
        raise TsneError(f"t-SNE needs at least 4 points, got {n}")
    if cfg.d_r < 1 or cfg.iters < 1:
        raise TsneError("d_r and iters must be positive")
    perp = effective_perplexity(cfg.perplexity, n)
    P = pairwise_affinities(X, perp)
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)
    P /= P.sum()

    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, size=(n, cfg.d_r))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = []
    first_kl = None
    for it in range(cfg.iters):
        exag = cfg.exaggeration if it < cfg.exaggeration_iters else 1.0
        Q, num = _q(Y)
        if it >= cfg.exaggeration_iters and first_kl is None:
            first_kl = kl_divergence(P, Q)
        PQ = (exag * P - Q) * num
        grad = 4.0 * (np.diag(PQ.sum(axis=1)) - PQ) @ Y
        mom = cfg.momentum_initial if it < cfg.momentum_switch else cfg.momentum_final
        inc = np.sign(grad) != np.sign(update)
        gains = np.where(inc, gains + 0.2, gains * 0.8)
        np.maximum(gains, 0.01, out=gains)
        update = mom * update - cfg.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if not np.all(np.isfinite(Y)):
            raise TsneError(f"non-finite embedding at iteration {it}; lower learning_rate")
        if it % 50 == 0:
            history.append((it, kl_divergence(P, Q)))
    Q, _ = _q(Y)
    final = kl_divergence(P, Q)
    if first_kl is None:
        first_kl = final
    history.append((cfg.iters, final))
    return ReducedEmbedding(Y, final, first_kl, history)


def pca(X: np.ndarray, d_r: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    U, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    # deterministic sign: largest-magnitude loading positive
    signs = np.sign(Vt[np.arange(Vt.shape[0]), np.argmax(np.abs(Vt), axis=1)])
    signs[signs == 0] = 1.0
    Vt = Vt * signs[:, None]
    out = Xc @ Vt[:d_r].T
    if out.shape[1] < d_r:
        out = np.hstack([out, np.zeros((out.shape[0], d_r - out.shape[1]))])
    return out
