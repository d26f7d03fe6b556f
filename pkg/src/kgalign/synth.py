"""Synthetic inputs with planted ground truth.

Three generators:

* :func:`gen_planted_activations` - activations whose class scores are built
  from a known set of features per class.
* :func:`gen_planted_pair` - a random graph and a relabelled, optionally
  rewired copy of it.
* :func:`gen_world` - a small knowledge base plus matching activation data,
  enough to drive every pipeline stage end to end.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cnn_graph import ActivationDataset
from .graph import KnowledgeGraph, canonical_edges
from .kg_builder import Triple
from .rng import substream


@dataclass
class PlantedSpec:
    n_classes: int
    n_features: int
    affinity: dict[int, set[int]]
    noise_sigma: float = 0.1
    boost: float = 1.0
    n_images: int = 500
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_images < 2:
            raise ValueError("n_images must be >= 2")
        if self.noise_sigma < 0 or self.boost < 0:
            raise ValueError("noise_sigma and boost must be non-negative")
        for c in range(self.n_classes):
            feats = self.affinity.get(c)
            if not feats:
                raise ValueError(f"class {c} has an empty affinity set")
            if any(not 0 <= f < self.n_features for f in feats):
                raise ValueError(f"class {c} has a planted feature index out of range")


def disjoint_affinity(n_classes: int, per_class: int, n_features: int, rng_seed: int = 0) -> dict[int, set[int]]:
    """Assign ``per_class`` distinct features to every class, no feature shared."""
    if n_classes * per_class > n_features:
        raise ValueError("not enough features for disjoint affinity sets")
    perm = substream(rng_seed, "affinity").permutation(n_features)
    return {c: set(int(f) for f in perm[c * per_class:(c + 1) * per_class]) for c in range(n_classes)}


def gen_planted_activations(spec: PlantedSpec, class_names=None, feature_ids=None) -> ActivationDataset:
    rng = substream(spec.rng_seed, "activations")
    n, F, C = spec.n_images, spec.n_features, spec.n_classes
    labels = rng.integers(0, C, size=n)
    member = np.zeros((C, F))
    for c, feats in spec.affinity.items():
        member[c, sorted(feats)] = 1.0
    signal = spec.boost * member[labels]
    features = spec.noise_sigma * rng.standard_normal((n, F)) + signal
    # class scores sum the planted signal only, so boost = 0 leaves them independent of the features
    outputs = signal @ member.T + spec.noise_sigma * rng.standard_normal((n, C))
    return ActivationDataset(
        features, outputs, labels,
        class_names or [f"class_{c}" for c in range(C)],
        feature_ids or [f"f_{f}" for f in range(F)],
    )


def gen_planted_pair(n_nodes: int, avg_degree: float, edge_noise: float = 0.0, rng_seed: int = 0):
    """Random graph ``g1``, a node-relabelled copy ``g2`` with rewiring, and the relabelling.

    Each edge of ``g2`` is rewired with probability ``edge_noise`` by moving one
    endpoint to a random node, which keeps the edge count. Both graphs label
    node ``i`` of ``g1`` and its image in ``g2`` with the same string.
    """
    if n_nodes < 10:
        raise ValueError("n_nodes must be >= 10")
    if not 0 <= edge_noise < 1:
        raise ValueError("edge_noise must be in [0, 1)")
    rng = substream(rng_seed, "planted_pair")
    p = min(avg_degree / (n_nodes - 1), 1.0)
    iu, ju = np.triu_indices(n_nodes, k=1)
    keep = rng.random(iu.size) < p
    edges1 = [(int(a), int(b), 1.0) for a, b in zip(iu[keep], ju[keep])]
    labels1 = [f"n{i}" for i in range(n_nodes)]
    g1 = KnowledgeGraph(labels1, ["seed"] * n_nodes, edges1)

    perm = rng.permutation(n_nodes)
    current = {tuple(sorted((int(perm[a]), int(perm[b])))) for a, b, _ in edges1}
    edges2 = []
    for a, b, _ in edges1:
        e = tuple(sorted((int(perm[a]), int(perm[b]))))
        if rng.random() < edge_noise:
            kept = e[rng.integers(2)]
            for _ in range(100):
                other = int(rng.integers(n_nodes))
                cand = tuple(sorted((kept, other)))
                if other != kept and cand not in current:
                    current.discard(e)
                    current.add(cand)
                    e = cand
                    break
        edges2.append(e)
    labels2 = [None] * n_nodes
    for i in range(n_nodes):
        labels2[perm[i]] = labels1[i]
    g2 = KnowledgeGraph(labels2, ["seed"] * n_nodes, canonical_edges((a, b, 1.0) for a, b in edges2))
    truth = [(i, int(perm[i])) for i in range(n_nodes)]
    return g1, g2, truth


@dataclass
class World:
    """Everything the pipeline consumes, plus the ground truth behind it."""

    triples: list[Triple]
    seeds: list[str]
    extras: list[str]
    activations: ActivationDataset
    test_activations: ActivationDataset
    seed_pairs: list[tuple[str, str]]
    feature_truth: list[tuple[str, str]] = field(default_factory=list)


def gen_world(n_classes: int = 30, per_class: int = 4, n_distractors: int = 40, n_extras: int = 5,
              n_images: int = 600, n_test_images: int = 40, noise_sigma: float = 0.1, boost: float = 1.0,
              class_link_prob: float = 0.08, rng_seed: int = 0) -> World:
    """Synthetic knowledge base and activations sharing one planted part structure.

    Class ``c`` owns ``per_class`` features; feature ``f_i`` depicts the
    concept ``part_i`` and the knowledge base states ``(class_c, HasA, part_i)``.
    Unseen categories (extras) are built from parts of two random classes.
    Irrelevant relations and two-hop triples are added as noise.
    """
    rng = substream(rng_seed, "world")
    n_features = n_classes * per_class + n_distractors
    affinity = disjoint_affinity(n_classes, per_class, n_features, rng_seed)
    class_names = [f"class_{c}" for c in range(n_classes)]
    feature_ids = [f"f_{f}" for f in range(n_features)]
    parts = {f: f"part_{f}" for feats in affinity.values() for f in feats}

    triples = []
    for c, feats in affinity.items():
        for f in sorted(feats):
            triples.append(Triple(class_names[c], "HasA", parts[f], round(float(rng.uniform(1.0, 4.0)), 3)))
        triples.append(Triple(class_names[c], "Desires", f"want_{c}", 1.0))
    for a in range(n_classes):
        for b in range(a + 1, n_classes):
            if rng.random() < class_link_prob:
                triples.append(Triple(class_names[a], "HasA", class_names[b], round(float(rng.uniform(0.5, 2.0)), 3)))
    for f, part in parts.items():
        triples.append(Triple(part, "HasA", f"subpart_{f}", 1.0))

    extras = [f"unseen_{e}" for e in range(n_extras)]
    extra_parts = {}
    for e, name in enumerate(extras):
        donors = rng.choice(n_classes, size=2, replace=False)
        feats = sorted(f for c in donors for f in affinity[int(c)])
        chosen = sorted(int(f) for f in rng.choice(feats, size=max(2, len(feats) // 2), replace=False))
        extra_parts[e] = set(chosen)
        for f in chosen:
            triples.append(Triple(name, "HasA", parts[f], round(float(rng.uniform(1.0, 4.0)), 3)))
    order = rng.permutation(len(triples))
    triples = [triples[i] for i in order]

    train = gen_planted_activations(
        PlantedSpec(n_classes, n_features, affinity, noise_sigma, boost, n_images, rng_seed),
        class_names, feature_ids)
    test = gen_planted_activations(
        PlantedSpec(n_extras, n_features, extra_parts, noise_sigma, boost, n_test_images, rng_seed + 1),
        extras, feature_ids)
    return World(
        triples=triples,
        seeds=class_names,
        extras=extras,
        activations=train,
        test_activations=test,
        seed_pairs=[(name, name) for name in class_names],
        feature_truth=[(feature_ids[f], parts[f]) for f in sorted(parts)],
    )
