"""Alignment metrics: Hit@1, Hit@k-NNs curves and nearest-neighbour feature labels.

All distances here are Euclidean. Ties are broken by (graph id, node index).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .align import EmbeddingSpace
from .graph import CnnGraph

NodeFilter = Callable[[int, str], bool]


def kg_nodes(graph_id: int, kind: str) -> bool:
    return graph_id == 1


def kg_seeds(graph_id: int, kind: str) -> bool:
    return graph_id == 1 and kind == "seed"


def feature_nodes(graph_id: int, kind: str) -> bool:
    return graph_id == 2 and kind == "feature"


def any_node(graph_id: int, kind: str) -> bool:
    return True


@dataclass
class HitCurve:
    ks: list[int]
    values: list[float]
    perfect: list[float]

    def __post_init__(self):
        self.ks = [int(k) for k in self.ks]
        self.values = [float(v) for v in self.values]
        self.perfect = [float(p) for p in self.perfect]
        if not len(self.ks) == len(self.values) == len(self.perfect):
            raise ValueError("ks, values and perfect must have equal length")
        if any(b <= a for a, b in zip(self.ks, self.ks[1:])):
            raise ValueError("ks must be strictly ascending")
        if any(not 0 <= v <= 1 for v in self.values + self.perfect):
            raise ValueError("curve values must lie in [0, 1]")


def _candidates(space: EmbeddingSpace, node_filter: NodeFilter):
    """Graph ids, node indices and the stacked vectors of every node passing the filter."""
    gids, idxs, mats = [], [], []
    for gid in (1, 2):
        kinds = space.kinds(gid)
        verdict = {k: bool(node_filter(gid, k)) for k in set(kinds)}
        sel = np.array([i for i, k in enumerate(kinds) if verdict[k]], dtype=np.int64)
        gids.append(np.full(sel.size, gid, dtype=np.int64))
        idxs.append(sel)
        mats.append(space.matrix(gid)[sel])
    return np.concatenate(gids), np.concatenate(idxs), np.vstack(mats)


def nearest_neighbors(space: EmbeddingSpace, query: tuple[int, int], k: int,
                      node_filter: NodeFilter = any_node) -> list[tuple[tuple[int, int], float]]:
    """The ``k`` closest nodes to ``query`` passing ``node_filter``, query excluded.

    Returns ``((graph_id, index), distance)`` in ascending distance. Fewer than
    ``k`` entries come back when there are fewer candidates.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    qg, qi = query
    q = space.vector(qg, qi)
    gids, idxs, X = _candidates(space, node_filter)
    keep = ~((gids == qg) & (idxs == qi))
    gids, idxs, X = gids[keep], idxs[keep], X[keep]
    d = np.sqrt(((X - q) ** 2).sum(axis=1))
    order = np.lexsort((idxs, gids, d))[:k]
    return [((int(gids[o]), int(idxs[o])), float(d[o])) for o in order]


def hit_at_1(space: EmbeddingSpace, test_pairs: Sequence[tuple[int, int]], candidates: str = "all") -> float:
    """Share of ``(kg_node, cnn_node)`` test pairs whose CNN node has its partner as nearest kg node.

    ``candidates`` is ``"all"`` (every kg node) or ``"seeds"``.
    """
    if len(test_pairs) == 0:
        raise ValueError("test_pairs is empty")
    node_filter = {"all": kg_nodes, "seeds": kg_seeds}[candidates]
    gids, idxs, X = _candidates(space, node_filter)
    hits = 0
    for kg_node, cnn_node in test_pairs:
        d = np.sqrt(((X - space.vector(2, cnn_node)) ** 2).sum(axis=1))
        best = np.lexsort((idxs, gids, d))[0]
        hits += int(idxs[best] == kg_node)
    return hits / len(test_pairs)


def activated_features(vector, cnn_graph: CnnGraph, threshold: float = 0.0, feature_ids=None) -> set[int]:
    """CNN-graph feature nodes whose activation strictly exceeds ``threshold``.

    Without ``feature_ids``, ``vector[i]`` is the activation of the i-th feature
    node in index order. With it, ``vector`` is a full flatten-layer vector whose
    columns are named by ``feature_ids``.
    """
    vector = np.asarray(vector, dtype=np.float64)
    nodes = sorted(cnn_graph.feature_nodes)
    if feature_ids is None:
        if vector.size != len(nodes):
            raise ValueError(f"expected {len(nodes)} activations, got {vector.size}")
        cols = range(len(nodes))
    else:
        col_of = {fid: i for i, fid in enumerate(feature_ids)}
        cols = [col_of[cnn_graph.labels[n]] for n in nodes]
    return {n for n, c in zip(nodes, cols) if vector[c] > threshold}


def hit_at_k_curve(space: EmbeddingSpace, label_node, activated: Iterable[int], ks) -> HitCurve:
    """Fraction of activated feature nodes among the k nearest feature nodes of a kg node.

    ``label_node`` is a kg label or index. ``values[i] = |activated & top-k| / k``
    and ``perfect[i] = min(1, |activated| / k)``.
    """
    if isinstance(label_node, str):
        label_node = space.lookup(1, label_node)
    ks = [int(k) for k in ks]
    activated = set(activated)
    if not ks:
        return HitCurve([], [], [])
    ranked = nearest_neighbors(space, (1, int(label_node)), max(ks), feature_nodes)
    hit = np.cumsum([int(idx in activated) for (_, idx), _ in ranked])
    values, perfect = [], []
    for k in ks:
        got = int(hit[min(k, len(hit)) - 1]) if len(hit) else 0
        values.append(got / k)
        perfect.append(min(1.0, len(activated) / k))
    return HitCurve(ks, values, perfect)


def aggregate_curves(curves: Sequence[HitCurve]) -> HitCurve:
    """Pointwise mean of curves sharing the same ``ks``."""
    if not curves:
        raise ValueError("no curves to aggregate")
    ks = curves[0].ks
    if any(c.ks != ks for c in curves):
        raise ValueError("curves have different ks")
    values = np.mean([c.values for c in curves], axis=0)
    perfect = np.mean([c.perfect for c in curves], axis=0)
    return HitCurve(ks, np.clip(values, 0, 1), np.clip(perfect, 0, 1))


def label_feature(space: EmbeddingSpace, feature_node: int, k: int = 5) -> list[tuple[str, float]]:
    """Nearest kg labels (any kg node, seeds or not) for a CNN feature node."""
    ranked = nearest_neighbors(space, (2, int(feature_node)), k, kg_nodes)
    return [(space.labels1[idx], dist) for (_, idx), dist in ranked]
