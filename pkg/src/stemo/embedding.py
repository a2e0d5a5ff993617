"""Time-indexed node embeddings from biased random walks.

Walks are biased two ways: the base transition weight from the current node
j to a candidate k is the minimum similarity min_{t'<=t} A_{t,t'}[j, k], and
a node2vec-style factor favours returning to the walk's source (1/p) and
visiting nodes that have already halted (1/q). Sampled walks are treated as
sentences and embeddings trained skip-gram style with negative sampling,
warm-started from the previous time step's table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class WalkConfig:
    p: float = 2.0
    q: float = 0.5
    walk_length: int = 8
    walks_per_node: int = 10
    window: int = 3
    negatives: int = 5
    lr: float = 0.05

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError(f"p and q must be positive, got p={self.p} q={self.q}")
        if self.walk_length < 2:
            raise ValueError(f"walk_length must be >= 2, got {self.walk_length}")


@dataclass
class EmbeddingTable:
    """Per-node embedding vectors (and the skip-gram context vectors)."""

    vectors: np.ndarray   # (n, e)
    context: np.ndarray   # (n, e)
    t: int = -1

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.vectors.copy(), self.context.copy(), self.t)


def init_embeddings(n: int, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n, dim))
    return EmbeddingTable(vectors=vectors, context=np.zeros((n, dim)), t=-1)


def transition_weights(source: int, current: int, min_sim: np.ndarray,
                       halted: np.ndarray, cfg: WalkConfig) -> np.ndarray:
    """Unnormalized weight of moving from ``current`` to every candidate node.

    ``min_sim`` is the (n, n) matrix of per-pair minimum similarity over
    lags; its zero diagonal rules out self-transitions. ``source`` may be -1
    for the first step of a walk (no return bias applies).
    """
    base = min_sim[current].astype(np.float64).copy()
    alpha = np.ones_like(base)
    alpha[np.asarray(halted, dtype=bool)] = 1.0 / cfg.q
    if source >= 0:
        alpha[source] = 1.0 / cfg.p  # return bias wins over the halt bias
    w = base * alpha
    if w.sum() <= 0:
        # Degenerate similarity: fall back to uniform over the other nodes.
        w = np.ones_like(base)
        w[current] = 0.0
    return w


def sample_walks(min_sim: np.ndarray, halted: np.ndarray, cfg: WalkConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """Biased second-order walks, ``walks_per_node`` per start node.

    Returns an integer array (n * walks_per_node, walk_length). All walks
    advance in lockstep so each step is one vectorized categorical draw.
    """
    n = min_sim.shape[0]
    halted = np.asarray(halted, dtype=bool)
    n_walks = n * cfg.walks_per_node
    walks = np.empty((n_walks, cfg.walk_length), dtype=np.int64)
    walks[:, 0] = np.repeat(np.arange(n), cfg.walks_per_node)
    alpha_base = np.ones(n)
    alpha_base[halted] = 1.0 / cfg.q
    rows = np.arange(n_walks)
    for step in range(1, cfg.walk_length):
        cur = walks[:, step - 1]
        w = min_sim[cur] * alpha_base[None, :]
        if step >= 2:
            src = walks[:, step - 2]
            w[rows, src] = min_sim[cur, src] / cfg.p  # return bias wins over halt bias
        w[rows, cur] = 0.0
        sums = w.sum(axis=1)
        dead = sums <= 0
        if np.any(dead):
            w[dead] = 1.0
            w[dead, cur[dead]] = 0.0
            sums[dead] = w[dead].sum(axis=1)
        probs = w / sums[:, None]
        u = rng.random((n_walks, 1))
        nxt = (probs.cumsum(axis=1) < u).sum(axis=1)
        walks[:, step] = np.minimum(nxt, n - 1)
    return walks


def _skipgram_pairs(walks: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    length = walks.shape[1]
    for off in range(1, window + 1):
        if off >= length:
            break
        centers.append(walks[:, :-off].ravel())
        contexts.append(walks[:, off:].ravel())
        centers.append(walks[:, off:].ravel())
        contexts.append(walks[:, :-off].ravel())
    return np.concatenate(centers), np.concatenate(contexts)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -40.0, 40.0)))


def _segment_sum(idx: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    out = np.empty((n, rows.shape[1]))
    for c in range(rows.shape[1]):
        out[:, c] = np.bincount(idx, weights=rows[:, c], minlength=n)
    return out


def train_embeddings(walks: np.ndarray, prev: EmbeddingTable, cfg: WalkConfig,
                     rng: np.random.Generator, t: int | None = None) -> EmbeddingTable:
    """One skip-gram pass with negative sampling, warm-started from ``prev``.

    Negatives are drawn from the corpus unigram distribution raised to 0.75.
    An empty walk set returns the table unchanged.
    """
    table = prev.copy()
    if t is not None:
        table.t = t
    if walks.size == 0:
        return table
    centers, contexts = _skipgram_pairs(walks, cfg.window)
    if centers.size == 0:
        return table
    counts = np.bincount(walks.ravel(), minlength=table.n).astype(np.float64)
    noise = counts ** 0.75
    noise /= noise.sum()
    cdf = noise.cumsum()
    negs = np.searchsorted(cdf, rng.random((centers.size, cfg.negatives)), side="right")
    negs = np.minimum(negs, table.n - 1)

    vec, ctx = table.vectors, table.context
    v = vec[centers]
    u = ctx[contexts]
    s_pos = _sigmoid(np.einsum("pe,pe->p", v, u))
    coef_pos = cfg.lr * (1.0 - s_pos)
    un = ctx[negs]  # (P, K, e)
    s_neg = _sigmoid(np.einsum("pke,pe->pk", un, v))
    coef_neg = -cfg.lr * s_neg
    coef_neg[negs == contexts[:, None]] = 0.0  # skip negatives that hit the positive
    d_v = coef_pos[:, None] * u + np.einsum("pk,pke->pe", coef_neg, un)
    d_u = coef_pos[:, None] * v
    d_un = coef_neg[:, :, None] * v[:, None, :]
    # Mean-gradient step per node: one pass touches each node many times, so
    # averaging keeps the step size at lr scale for any corpus size.
    ctx_idx = np.concatenate([contexts, negs.ravel()])
    d_ctx = np.concatenate([d_u, d_un.reshape(-1, table.dim)])
    acc_v = _segment_sum(centers, d_v, table.n)
    acc_u = _segment_sum(ctx_idx, d_ctx, table.n)
    cnt_v = np.maximum(np.bincount(centers, minlength=table.n), 1)
    cnt_u = np.maximum(np.bincount(ctx_idx, minlength=table.n), 1)
    vec += acc_v / cnt_v[:, None]
    ctx += acc_u / cnt_u[:, None]

    norms = np.linalg.norm(vec, axis=1)
    if np.any(norms > 10.0) or not np.all(np.isfinite(vec)):
        raise FloatingPointError(f"embedding divergence: max norm {norms.max():.3f}")
    return table
