"""Two-layer GCN entity alignment trained with a margin ranking loss.

Both graphs share the layer weights ``W1``, ``W2``; each graph has its own
trainable input matrix ``H0``. The embedding of a node is the L2-normalised
row of ``S relu(S H0 W1) W2`` where ``S`` is the symmetrically normalised
adjacency with self-loops. Gradients are accumulated in reverse mode by
hand; :func:`gradient_check` compares them against central differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import SamplingError, TrainingError
from .graph import Graph
from .rng import substream

NORM_EPS = 1e-12


@dataclass
class TrainConfig:
    dim: int = 200
    layers: int = 2
    margin: float = 3.0
    learning_rate: float = 10.0
    epochs: int = 2000
    negatives_per_pair: int = 5
    rng_seed: int = 0
    distance_for_loss: str = "L1"
    weighted_adjacency: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.layers != 2:
            raise ValueError("only the two-layer model is implemented")
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.negatives_per_pair < 1:
            raise ValueError("negatives_per_pair must be >= 1")
        self.distance_for_loss = self.distance_for_loss.upper()
        if self.distance_for_loss not in ("L1", "L2"):
            raise ValueError("distance_for_loss must be L1 or L2")


@dataclass
class AlignedGraphPair:
    g1: Graph
    g2: Graph
    seed_pairs: list[tuple[int, int]]
    train_pairs: list[tuple[int, int]]
    test_pairs: list[tuple[int, int]]

    def __post_init__(self):
        left = [a for a, _ in self.seed_pairs]
        right = [b for _, b in self.seed_pairs]
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise ValueError("a node appears in more than one seed pair")
        if any(not 0 <= a < self.g1.n_nodes for a in left) or any(not 0 <= b < self.g2.n_nodes for b in right):
            raise ValueError("seed pair references a missing node")
        if sorted(self.train_pairs + self.test_pairs) != sorted(self.seed_pairs):
            raise ValueError("train and test pairs must partition the seed pairs")

    @classmethod
    def from_pairs(cls, g1, g2, seed_pairs, ratio=0.9, rng_seed=0):
        seed_pairs = [(int(a), int(b)) for a, b in seed_pairs]
        train, test = split_pairs(seed_pairs, ratio, rng_seed)
        return cls(g1, g2, seed_pairs, train, test)


@dataclass
class GcnParams:
    H0_g1: np.ndarray
    H0_g2: np.ndarray
    W1: np.ndarray
    W2: np.ndarray

    NAMES = ("H0_g1", "H0_g2", "W1", "W2")

    def arrays(self):
        return [getattr(self, n) for n in self.NAMES]

    def copy(self):
        return GcnParams(*(a.copy() for a in self.arrays()))


@dataclass
class EmbeddingSpace:
    """Embeddings of both graphs in one metric space. Graph ids are 1 and 2."""

    g1: np.ndarray
    g2: np.ndarray
    labels1: list[str]
    labels2: list[str]
    kinds1: list[str] = field(default=None)
    kinds2: list[str] = field(default=None)

    def __post_init__(self):
        self.g1 = np.asarray(self.g1, dtype=np.float64)
        self.g2 = np.asarray(self.g2, dtype=np.float64)
        if self.g1.ndim != 2 or self.g2.ndim != 2 or self.g1.shape[1] != self.g2.shape[1]:
            raise ValueError("embedding matrices must be 2-D with a common width")
        self.labels1, self.labels2 = list(self.labels1), list(self.labels2)
        if len(self.labels1) != len(self.g1) or len(self.labels2) != len(self.g2):
            raise ValueError("one label per embedded node is required")
        self.kinds1 = list(self.kinds1) if self.kinds1 is not None else ["node"] * len(self.g1)
        self.kinds2 = list(self.kinds2) if self.kinds2 is not None else ["node"] * len(self.g2)

    @property
    def dim(self) -> int:
        return self.g1.shape[1]

    def matrix(self, graph_id: int) -> np.ndarray:
        return {1: self.g1, 2: self.g2}[graph_id]

    def labels(self, graph_id: int) -> list[str]:
        return {1: self.labels1, 2: self.labels2}[graph_id]

    def kinds(self, graph_id: int) -> list[str]:
        return {1: self.kinds1, 2: self.kinds2}[graph_id]

    def vector(self, graph_id: int, index: int) -> np.ndarray:
        return self.matrix(graph_id)[index]

    def keys(self) -> list[tuple[int, int]]:
        return [(1, i) for i in range(len(self.g1))] + [(2, i) for i in range(len(self.g2))]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.g1, self.g2])

    def with_kinds(self, kinds1, kinds2) -> "EmbeddingSpace":
        return replace(self, kinds1=list(kinds1), kinds2=list(kinds2))

    def lookup(self, graph_id: int, label: str) -> int:
        try:
            return self.labels(graph_id).index(label)
        except ValueError:
            raise KeyError(f"label {label!r} not found in graph {graph_id}") from None


def split_pairs(pairs: Sequence, ratio: float = 0.9, rng_seed: int = 0):
    """Random train/test partition with ``round(ratio * n)`` training pairs."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be strictly between 0 and 1")
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("at least 2 pairs are needed to split")
    n_train = min(max(int(math.floor(ratio * len(pairs) + 0.5)), 1), len(pairs) - 1)
    perm = substream(rng_seed, "split").permutation(len(pairs))
    train = [pairs[i] for i in sorted(perm[:n_train])]
    test = [pairs[i] for i in sorted(perm[n_train:])]
    return train, test


def normalize_adjacency(graph: Graph, weighted: bool = False) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` with ``A`` binary (or weighted) and symmetric."""
    n = graph.n_nodes
    if graph.edges:
        a, b, w = (np.array(c) for c in zip(*graph.edges))
        w = np.abs(w.astype(np.float64)) if weighted else np.ones(len(a))
        rows = np.concatenate([a, b, np.arange(n)])
        cols = np.concatenate([b, a, np.arange(n)])
        vals = np.concatenate([w, w, np.ones(n)])
    else:
        rows = cols = np.arange(n)
        vals = np.ones(n)
    A = sp.csr_matrix((vals, (rows.astype(np.int64), cols.astype(np.int64))), shape=(n, n))
    d = np.asarray(A.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(d))
    return (inv_sqrt @ A @ inv_sqrt).tocsr()


def _check_shapes(S, H0, W1, W2):
    n = H0.shape[0]
    if S.shape != (n, n):
        raise ValueError(f"S has shape {S.shape}, expected ({n}, {n})")
    if W1.shape[0] != H0.shape[1] or W2.shape[0] != W1.shape[1]:
        raise ValueError("weight shapes are incompatible with the node features")


def gcn_forward(S, H0, W1, W2) -> np.ndarray:
    """``H2 = S relu(S H0 W1) W2`` (no activation on the output layer)."""
    H0, W1, W2 = (np.asarray(x, dtype=np.float64) for x in (H0, W1, W2))
    _check_shapes(S, H0, W1, W2)
    H1 = np.maximum(S @ H0 @ W1, 0.0)
    return np.asarray(S @ H1 @ W2)


def _forward_cache(S, H0, W1, W2):
    A1 = np.asarray(S @ H0)
    Z1 = A1 @ W1
    H1 = np.maximum(Z1, 0.0)
    A2 = np.asarray(S @ H1)
    H2 = A2 @ W2
    norms = np.linalg.norm(H2, axis=1, keepdims=True)
    scale = np.maximum(norms, NORM_EPS)
    return dict(A1=A1, Z1=Z1, A2=A2, H2=H2, scale=scale, tiny=norms < NORM_EPS, E=H2 / scale)


def l2_rows(H: np.ndarray) -> np.ndarray:
    return H / np.maximum(np.linalg.norm(H, axis=1, keepdims=True), NORM_EPS)


def embed(S, H0, W1, W2) -> np.ndarray:
    """Node embeddings: row-normalised GCN output."""
    return l2_rows(gcn_forward(S, H0, W1, W2))


def _distance(a, b, kind):
    diff = a - b
    if kind == "L1":
        return np.abs(diff).sum(axis=-1)
    return np.sqrt((diff * diff).sum(axis=-1))


def _distance_grad(a, b, kind):
    """Gradient of d(a, b) with respect to ``a`` (the one for ``b`` is its negation)."""
    diff = a - b
    if kind == "L1":
        return np.sign(diff)
    norm = np.sqrt((diff * diff).sum(axis=-1, keepdims=True))
    return np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)


def _as_negative_array(train_pairs, negatives) -> np.ndarray:
    neg = np.asarray(negatives, dtype=np.int64)
    if neg.ndim != 3 or neg.shape[0] != len(train_pairs) or neg.shape[2] != 2:
        raise ValueError("negatives must have shape (n_pairs, n_negatives, 2)")
    return neg


def alignment_loss(emb1, emb2, train_pairs, negatives, margin, distance="L1") -> float:
    """Sum over pairs ``p`` and their corruptions ``p'`` of ``max(0, d(p) + margin - d(p'))``.

    ``negatives[i]`` lists the corrupted pairs of ``train_pairs[i]``.
    """
    distance = distance.upper()
    if len(train_pairs) == 0:
        return 0.0
    pos = np.asarray(train_pairs, dtype=np.int64)
    neg = _as_negative_array(train_pairs, negatives)
    d_pos = _distance(emb1[pos[:, 0]], emb2[pos[:, 1]], distance)
    d_neg = _distance(emb1[neg[..., 0]], emb2[neg[..., 1]], distance)
    return float(np.maximum(d_pos[:, None] + margin - d_neg, 0.0).sum())


def _loss_grad_embeddings(E1, E2, pos, neg, margin, distance):
    d_pos = _distance(E1[pos[:, 0]], E2[pos[:, 1]], distance)
    d_neg = _distance(E1[neg[..., 0]], E2[neg[..., 1]], distance)
    viol = d_pos[:, None] + margin - d_neg
    active = viol > 0
    loss = float(viol[active].sum())

    dE1 = np.zeros_like(E1)
    dE2 = np.zeros_like(E2)
    n_active = active.sum(axis=1).astype(np.float64)
    g_pos = _distance_grad(E1[pos[:, 0]], E2[pos[:, 1]], distance) * n_active[:, None]
    np.add.at(dE1, pos[:, 0], g_pos)
    np.add.at(dE2, pos[:, 1], -g_pos)
    p_idx, k_idx = np.nonzero(active)
    ni, nj = neg[p_idx, k_idx, 0], neg[p_idx, k_idx, 1]
    g_neg = _distance_grad(E1[ni], E2[nj], distance)
    np.add.at(dE1, ni, -g_neg)
    np.add.at(dE2, nj, g_neg)
    return loss, dE1, dE2


def _backward(S, W1, W2, cache, dE):
    """Reverse-mode pass for one graph: returns (dH0, dW1, dW2)."""
    scale, E = cache["scale"], cache["E"]
    radial = np.where(cache["tiny"], 0.0, (E * dE).sum(axis=1, keepdims=True))
    dH2 = (dE - E * radial) / scale
    dW2 = cache["A2"].T @ dH2
    dA2 = dH2 @ W2.T
    dH1 = np.asarray(S.T @ dA2)
    dZ1 = dH1 * (cache["Z1"] > 0)
    dW1 = cache["A1"].T @ dZ1
    dA1 = dZ1 @ W1.T
    dH0 = np.asarray(S.T @ dA1)
    return dH0, dW1, dW2


def loss_and_grad(params: GcnParams, S1, S2, train_pairs, negatives, margin, distance="L1"):
    """Alignment loss of the embedded graphs and its gradient for every parameter."""
    distance = distance.upper()
    pos = np.asarray(train_pairs, dtype=np.int64).reshape(-1, 2)
    neg = _as_negative_array(pos, negatives)
    c1 = _forward_cache(S1, params.H0_g1, params.W1, params.W2)
    c2 = _forward_cache(S2, params.H0_g2, params.W1, params.W2)
    loss, dE1, dE2 = _loss_grad_embeddings(c1["E"], c2["E"], pos, neg, margin, distance)
    dH0_1, dW1_a, dW2_a = _backward(S1, params.W1, params.W2, c1, dE1)
    dH0_2, dW1_b, dW2_b = _backward(S2, params.W1, params.W2, c2, dE2)
    return loss, GcnParams(dH0_1, dH0_2, dW1_a + dW1_b, dW2_a + dW2_b)


def model_loss(params: GcnParams, S1, S2, train_pairs, negatives, margin, distance="L1") -> float:
    """Forward-only loss, the function differentiated by :func:`loss_and_grad`."""
    E1 = embed(S1, params.H0_g1, params.W1, params.W2)
    E2 = embed(S2, params.H0_g2, params.W1, params.W2)
    return alignment_loss(E1, E2, train_pairs, negatives, margin, distance)


def sample_negatives(pair, n_nodes_g1, n_nodes_g2, count, rng, side="random"):
    """Corrupt one side of ``pair`` ``count`` times with a uniformly drawn different node.

    ``side`` is ``"g1"``, ``"g2"`` or ``"random"`` (fair coin per draw).
    """
    out = sample_negative_batch([pair], n_nodes_g1, n_nodes_g2, count, rng, side)[0]
    return [(int(a), int(b)) for a, b in out]


def sample_negative_batch(pairs, n_nodes_g1, n_nodes_g2, count, rng, side="random") -> np.ndarray:
    """Vectorised :func:`sample_negatives` over many pairs; shape ``(n_pairs, count, 2)``."""
    if count < 1:
        raise SamplingError("count must be >= 1")
    pos = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    shape = (len(pos), count)
    if side == "random":
        corrupt_g1 = rng.integers(0, 2, size=shape).astype(bool)
    elif side in ("g1", "g2"):
        corrupt_g1 = np.full(shape, side == "g1")
    else:
        raise ValueError(f"unknown side {side!r}")
    if (corrupt_g1.any() and n_nodes_g1 < 2) or ((~corrupt_g1).any() and n_nodes_g2 < 2):
        raise SamplingError("cannot draw a corrupted node from a graph with fewer than 2 nodes")
    out = np.repeat(pos[:, None, :], count, axis=1)
    # draw from n-1 slots and skip over the true node to stay uniform on the rest
    d1 = rng.integers(0, max(n_nodes_g1 - 1, 1), size=shape)
    d1 = d1 + (d1 >= out[..., 0])
    d2 = rng.integers(0, max(n_nodes_g2 - 1, 1), size=shape)
    d2 = d2 + (d2 >= out[..., 1])
    out[..., 0] = np.where(corrupt_g1, d1, out[..., 0])
    out[..., 1] = np.where(corrupt_g1, out[..., 1], d2)
    return out


def init_params(n1: int, n2: int, dim: int, rng) -> GcnParams:
    b = 1.0 / math.sqrt(dim)
    return GcnParams(
        H0_g1=rng.uniform(-b, b, size=(n1, dim)),
        H0_g2=rng.uniform(-b, b, size=(n2, dim)),
        W1=rng.uniform(-b, b, size=(dim, dim)),
        W2=rng.uniform(-b, b, size=(dim, dim)),
    )


def fit(params: GcnParams, S1, S2, train_pairs, cfg: TrainConfig,
        negatives_fn: Callable[[int], np.ndarray], history: list | None = None) -> GcnParams:
    """Full-batch gradient descent from ``params``; returns the trained parameters.

    The step is ``learning_rate`` times the gradient of the mean hinge term.
    Input rows ``H0`` are projected back onto the unit sphere after every step.
    """
    params = params.copy()
    n_terms = max(len(train_pairs) * cfg.negatives_per_pair, 1)
    step = cfg.learning_rate / n_terms
    for epoch in range(1, cfg.epochs + 1):
        negatives = negatives_fn(epoch)
        loss, grads = loss_and_grad(params, S1, S2, train_pairs, negatives, cfg.margin, cfg.distance_for_loss)
        if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.arrays()):
            raise TrainingError("non-finite loss or gradient", epoch)
        if history is not None:
            history.append(loss)
        for name in GcnParams.NAMES:
            setattr(params, name, getattr(params, name) - step * getattr(grads, name))
        # the loss is bounded by the output normalisation, so overflow shows up in the weights first
        if not all(np.isfinite(np.linalg.norm(a)) for a in params.arrays()):
            raise TrainingError("parameters overflowed", epoch)
        params.H0_g1 = l2_rows(params.H0_g1)
        params.H0_g2 = l2_rows(params.H0_g2)
    return params


def train(pair: AlignedGraphPair, cfg: TrainConfig, history: list | None = None,
          return_params: bool = False):
    """Train the shared-weight GCN on ``pair.train_pairs`` and embed both graphs.

    Per-epoch losses are appended to ``history`` when given.
    """
    if pair.g1.n_nodes == 0 or pair.g2.n_nodes == 0:
        raise ValueError("both graphs must have at least one node")
    S1 = normalize_adjacency(pair.g1, cfg.weighted_adjacency)
    S2 = normalize_adjacency(pair.g2, cfg.weighted_adjacency)
    params = init_params(pair.g1.n_nodes, pair.g2.n_nodes, cfg.dim, substream(cfg.rng_seed, "init"))
    rng_neg = substream(cfg.rng_seed, "negatives")
    train_pairs = np.asarray(pair.train_pairs, dtype=np.int64).reshape(-1, 2)
    n1, n2 = pair.g1.n_nodes, pair.g2.n_nodes

    def negatives_fn(epoch):
        return sample_negative_batch(train_pairs, n1, n2, cfg.negatives_per_pair, rng_neg)

    params = fit(params, S1, S2, train_pairs, cfg, negatives_fn, history)
    space = EmbeddingSpace(
        embed(S1, params.H0_g1, params.W1, params.W2),
        embed(S2, params.H0_g2, params.W1, params.W2),
        pair.g1.labels, pair.g2.labels, pair.g1.kinds, pair.g2.kinds,
    )
    return (space, params) if return_params else space


@dataclass
class GradCheckInstance:
    params: GcnParams
    S1: object
    S2: object
    train_pairs: np.ndarray
    negatives: np.ndarray
    margin: float
    distance: str = "L1"


def random_instance(rng, n1=12, n2=10, dim=6, n_pairs=5, n_neg=3, edge_prob=0.3,
                    margin=1.0, distance="L1") -> GradCheckInstance:
    """Small random connected instance for gradient checking.

    A random spanning path keeps every node connected; isolated nodes tend to
    collapse onto a single hidden direction, where the true gradient is exactly
    zero and central differences only see round-off.
    """
    def random_graph(n):
        order = rng.permutation(n)
        edges = {(min(a, b), max(a, b)) for a, b in zip(order[:-1].tolist(), order[1:].tolist())}
        edges |= {(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < edge_prob}
        return Graph([f"v{i}" for i in range(n)], ["other"] * n, [(a, b, 1.0) for a, b in sorted(edges)])

    S1, S2 = normalize_adjacency(random_graph(n1)), normalize_adjacency(random_graph(n2))
    left = rng.choice(n1, size=n_pairs, replace=False)
    right = rng.choice(n2, size=n_pairs, replace=False)
    pairs = np.stack([left, right], axis=1)
    negatives = sample_negative_batch(pairs, n1, n2, n_neg, rng)
    params = GcnParams(rng.normal(size=(n1, dim)), rng.normal(size=(n2, dim)),
                       rng.normal(size=(dim, dim)), rng.normal(size=(dim, dim)))
    return GradCheckInstance(params, S1, S2, pairs, negatives, margin, distance)


def _min_hinge_gap(inst: GradCheckInstance, margin: float) -> float:
    E1 = embed(inst.S1, inst.params.H0_g1, inst.params.W1, inst.params.W2)
    E2 = embed(inst.S2, inst.params.H0_g2, inst.params.W1, inst.params.W2)
    pos, neg = np.asarray(inst.train_pairs), np.asarray(inst.negatives)
    if len(pos) == 0:
        return math.inf
    d_pos = _distance(E1[pos[:, 0]], E2[pos[:, 1]], inst.distance.upper())
    d_neg = _distance(E1[neg[..., 0]], E2[neg[..., 1]], inst.distance.upper())
    return float(np.abs(d_pos[:, None] + margin - d_neg).min())


def gradient_check(inst: GradCheckInstance, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error per entry is ``|g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)``. A
    margin that puts a hinge term within reach of the perturbation is nudged
    by 1e-3 first.
    """
    margin = inst.margin
    for _ in range(100):
        if _min_hinge_gap(inst, margin) > 1e3 * eps:
            break
        margin += 1e-3
    args = (inst.S1, inst.S2, inst.train_pairs, inst.negatives, margin, inst.distance)
    _, analytic = loss_and_grad(inst.params, *args)
    params = inst.params.copy()
    worst = 0.0
    for name in GcnParams.NAMES:
        theta = getattr(params, name)
        g_a = getattr(analytic, name)
        for idx in np.ndindex(theta.shape):
            orig = theta[idx]
            theta[idx] = orig + eps
            up = model_loss(params, *args)
            theta[idx] = orig - eps
            down = model_loss(params, *args)
            theta[idx] = orig
            g_fd = (up - down) / (2 * eps)
            err = abs(g_a[idx] - g_fd) / max(1e-8, abs(g_a[idx]) + abs(g_fd))
            worst = max(worst, err)
    return worst
