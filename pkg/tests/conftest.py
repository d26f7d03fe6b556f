import numpy as np
import pytest

from kgalign.graph import KnowledgeGraph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_kg(n_seeds, n_other, edges, extras=0):
    labels = [f"s{i}" for i in range(n_seeds)] + [f"e{i}" for i in range(extras)] + [f"o{i}" for i in range(n_other)]
    kinds = ["seed"] * n_seeds + ["extra"] * extras + ["other"] * n_other
    return KnowledgeGraph(labels, kinds, edges)


def random_kg(rng, n_seeds=20, n_other=60, p_seed_other=0.08, p_seed_seed=0.1):
    """Random kg with seed-seed and seed-other edges and random weights."""
    edges = []
    for s in range(n_seeds):
        for t in range(s + 1, n_seeds):
            if rng.random() < p_seed_seed:
                edges.append((s, t, float(rng.uniform(0.1, 5))))
        for o in range(n_other):
            if rng.random() < p_seed_other:
                edges.append((s, n_seeds + o, float(rng.uniform(0.1, 5))))
    for o in range(n_other):
        if rng.random() < 0.05:
            edges.append((n_seeds + o, n_seeds + (o + 1) % n_other, 1.0))
    return make_kg(n_seeds, n_other, edges)
