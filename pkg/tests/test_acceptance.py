"""Acceptance gate. Each test prints one PASS/FAIL line with its measured value and runtime.

Run on its own with ``pytest tests/test_acceptance.py -s``.
"""
import contextlib
import math
import time

import numpy as np
import pytest
from scipy.cluster.vq import kmeans2

from kgalign import io as kio
from kgalign.align import AlignedGraphPair, EmbeddingSpace, TrainConfig, gradient_check, random_instance, train
from kgalign.cli import main
from kgalign.cnn_graph import (CorrelationTable, build_cnn_graph, compute_correlations, concept_degrees,
                               load_activations, pearson, round_half_up, seed_incident_edges)
from kgalign.evaluate import hit_at_1, hit_at_k_curve, nearest_neighbors
from kgalign.graph import format_graph, read_graph
from kgalign.projection import tsne
from kgalign.synth import PlantedSpec, disjoint_affinity, gen_planted_activations, gen_planted_pair

from conftest import random_kg


@contextlib.contextmanager
def criterion(capsys, name, limit_s=None):
    """Time the block, print one result line, and enforce the runtime limit."""
    info = {}
    start = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        if ok and limit_s is not None and elapsed >= limit_s:
            ok = False
            info["runtime"] = f"exceeded {limit_s}s"
        detail = ", ".join(f"{k}={v}" for k, v in info.items())
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name} ({detail}; {elapsed:.2f}s)")
    if limit_s is not None:
        assert elapsed < limit_s, f"{name} took {elapsed:.1f}s, limit {limit_s}s"


def planted_hit1(noise, seed, epochs=2000):
    g1, g2, truth = gen_planted_pair(200, 6, noise, seed)
    pair = AlignedGraphPair.from_pairs(g1, g2, truth, ratio=0.9, rng_seed=seed)
    space = train(pair, TrainConfig(dim=64, epochs=epochs, rng_seed=seed))
    return hit_at_1(space, pair.test_pairs)


# ------------------------------------------------------------------ correlation

def _pearson_direct(x, y):
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def test_pearson_oracle_equivalence(capsys):
    rng = np.random.default_rng(2024)
    cases = [(rng.normal(size=50) * rng.uniform(0.1, 10), rng.normal(size=50) * rng.uniform(0.1, 10) + rng.normal())
             for _ in range(100)]
    with criterion(capsys, "Pearson oracle equivalence", limit_s=1.0) as info:
        worst = max(abs(pearson(x, y) - _pearson_direct(x.tolist(), y.tolist())) for x, y in cases)
        info["max_abs_err"] = f"{worst:.2e}"
        assert worst <= 1e-10


# ------------------------------------------------------------------ gradient

def test_gradient_correctness(capsys):
    rng = np.random.default_rng(77)
    with criterion(capsys, "Gradient correctness", limit_s=30.0) as info:
        errors = []
        for i in range(20):
            n1, n2 = int(rng.integers(6, 21)), int(rng.integers(6, 21))
            inst = random_instance(rng, n1=n1, n2=n2, dim=8,
                                   n_pairs=int(rng.integers(2, min(n1, n2))), n_neg=int(rng.integers(1, 5)),
                                   edge_prob=float(rng.uniform(0.1, 0.5)), distance=("L1", "L2")[i % 2])
            errors.append(gradient_check(inst, eps=1e-5))
        info["max_rel_err"] = f"{max(errors):.2e}"
        assert max(errors) < 1e-4


# ------------------------------------------------------------------ alignment

@pytest.fixture(scope="module")
def noise_results():
    return {}


def test_planted_alignment_recovery(capsys, noise_results):
    with criterion(capsys, "Planted alignment recovery", limit_s=300.0) as info:
        scores = [planted_hit1(0.0, seed) for seed in range(5)]
        noise_results[0.0] = float(np.mean(scores))
        info["mean_hit@1"] = f"{noise_results[0.0]:.3f}"
        info["per_seed"] = scores
        assert noise_results[0.0] >= 0.8


def test_noise_monotonicity(capsys, noise_results):
    with criterion(capsys, "Noise monotonicity") as info:
        if 0.0 not in noise_results:
            noise_results[0.0] = float(np.mean([planted_hit1(0.0, s) for s in range(5)]))
        for noise in (0.1, 0.3):
            noise_results[noise] = float(np.mean([planted_hit1(noise, s) for s in range(5)]))
        means = [noise_results[n] for n in (0.0, 0.1, 0.3)]
        info["means"] = [round(m, 3) for m in means]
        assert all(b <= a + 0.05 for a, b in zip(means, means[1:]))


# ------------------------------------------------------------------ graph building

def _brute_selection(r, m):
    cand = [(-r[c, f], f, c) for c in range(r.shape[0]) for f in range(r.shape[1]) if r[c, f] > 0]
    return [(c, f) for _, f, c in sorted(cand)[:m]]


def _recount(cnn, n_out):
    deg = [0] * n_out
    for a, b, _ in cnn.edges:
        if cnn.kinds[a] == "output" and cnn.kinds[b] == "feature":
            deg[a] += 1
    return deg


def _brute_concept_degree(kg, s):
    return sum(1 for a, b, _ in kg.edges if s in (a, b) and kg.kinds[b if a == s else a] != "seed")


def test_degree_matching_invariants(capsys):
    C, F = 20, 200
    with criterion(capsys, "Degree-matching invariants", limit_s=5.0) as info:
        checked = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            kg = random_kg(rng, n_seeds=C)
            r = rng.uniform(-1, 1, (C, F))
            corr = CorrelationTable(r, [f"s{i}" for i in range(C)], [f"f{i}" for i in range(F)])
            before = [_brute_concept_degree(kg, s) for s in range(C)]
            for fraction in (0.1, 0.3, 0.5, 0.8, 1.0):
                m = round_half_up(fraction * len(seed_incident_edges(kg)))
                chosen = _brute_selection(r, m)
                k = [sum(1 for c, _ in chosen if c == s) for s in range(C)]

                cnn, trimmed = build_cnn_graph(corr, kg, "kgtocnn", fraction)
                assert _recount(cnn, C) == k
                after = [_brute_concept_degree(trimmed, s) for s in range(C)]
                assert after == [min(kc, d) for kc, d in zip(k, before)]

                cnn, _ = build_cnn_graph(corr, kg, "cnntokg", fraction)
                pos = (r > 0).sum(axis=1)
                assert _recount(cnn, C) == [min(math.ceil(fraction * d), int(p)) for d, p in zip(before, pos)]
                assert concept_degrees(kg, range(C)) == before
                checked += 1
        info["cases"] = checked


def test_planted_feature_recovery(capsys):
    with criterion(capsys, "Planted feature recovery") as info:
        precisions = []
        for seed in range(3):
            aff = disjoint_affinity(20, 5, 200, seed)
            ds = gen_planted_activations(PlantedSpec(20, 200, aff, noise_sigma=0.1, boost=1.0, n_images=500,
                                                     rng_seed=seed))
            r = compute_correlations(ds).r
            for c, feats in aff.items():
                top = set(np.argsort(-r[c], kind="stable")[:len(feats)].tolist())
                precisions.append(len(top & feats) / len(feats))
        info["mean_precision"] = f"{np.mean(precisions):.3f}"
        assert np.mean(precisions) >= 0.95


# ------------------------------------------------------------------ evaluation

def test_hitk_chart_correctness(capsys):
    rng = np.random.default_rng(5)
    with criterion(capsys, "Hit@k chart correctness") as info:
        for n_active in (1, 37, 200, 260):
            n_feat = 400
            dirs = rng.normal(size=(n_feat, 8))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            radii = np.concatenate([np.arange(1, n_active + 1), 1000 + np.arange(n_feat - n_active)])
            feats = dirs * radii[:, None]
            g2 = np.vstack([rng.normal(size=(3, 8)) + 5000, feats])
            kinds2 = ["output"] * 3 + ["feature"] * n_feat
            space = EmbeddingSpace(np.zeros((2, 8)) + [[0] * 8, [9000] * 8], g2, ["label", "other"],
                                   [f"o{i}" for i in range(3)] + [f"f{i}" for i in range(n_feat)],
                                   ["seed", "other"], kinds2)
            active = set(range(3, 3 + n_active))
            curve = hit_at_k_curve(space, "label", active, range(1, 201))
            assert curve.values == curve.perfect
            assert curve.perfect == [min(1.0, n_active / k) for k in range(1, 201)]
        info["activated_sizes"] = [1, 37, 200, 260]


def _exhaustive(space, query, k):
    q = space.vector(*query)
    rows = []
    for gid in (1, 2):
        for i, v in enumerate(space.matrix(gid)):
            if (gid, i) != query:
                rows.append((math.dist(q, v), gid, i))
    rows.sort()
    return rows[:k]


def test_nearest_neighbor_oracle(capsys):
    rng = np.random.default_rng(9)
    with criterion(capsys, "Nearest-neighbour oracle equivalence") as info:
        n_queries = 0
        for lattice in (False, True):
            X = rng.integers(-2, 3, size=(1000, 3)).astype(float) if lattice else rng.normal(size=(1000, 16))
            space = EmbeddingSpace(X[:600], X[600:], [f"a{i}" for i in range(600)], [f"b{i}" for i in range(400)])
            for query in [(1, 0), (1, 599), (2, 0), (2, 123), (1, 311)]:
                for k in (1, 5, 50):
                    got = nearest_neighbors(space, query, k)
                    want = _exhaustive(space, query, k)
                    assert [key for key, _ in got] == [(g, i) for _, g, i in want]
                    assert np.allclose([d for _, d in got], [d for d, _, _ in want], rtol=0, atol=1e-12)
                    n_queries += 1
        info["queries"] = n_queries


# ------------------------------------------------------------------ projection

def test_tsne_sanity(capsys):
    with criterion(capsys, "t-SNE sanity") as info:
        passes, purities = 0, []
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            centers = rng.normal(size=(3, 10)) * 10
            truth = np.repeat(np.arange(3), 50)
            X = centers[truth] + rng.normal(size=(150, 10))
            hist = {}
            Y = tsne(X, perplexity=30, iterations=1000, rng_seed=seed, history=hist)
            _, pred = kmeans2(Y, 3, seed=seed, minit="++")
            purity = sum(np.bincount(truth[pred == c]).max() for c in np.unique(pred)) / 150
            purities.append(round(float(purity), 3))
            passes += int(hist["kl_final"] < hist["kl_switch"] and purity >= 0.9)
        info["purities"] = purities
        info["passing_seeds"] = passes
        assert passes >= 4


# ------------------------------------------------------------------ end to end

def test_end_to_end_pipeline(capsys, tmp_path):
    out = tmp_path / "run"
    (tmp_path / "pipeline.cfg").write_text(f"synth = true\nout_dir = {out}\n")
    with criterion(capsys, "End-to-end pipeline", limit_s=600.0) as info:
        with capsys.disabled():
            code = main(["pipeline", "--config", str(tmp_path / "pipeline.cfg")])
        assert code == 0
        checked = []
        for name in ("kg.tsv", "cnn.tsv", "cnn.kg.tsv"):
            text = (out / name).read_text()
            assert format_graph(read_graph(out / name)) == text
            checked.append(name)
        space = kio.read_embeddings(out / "embeddings.tsv")
        kio.write_embeddings(space, tmp_path / "emb.tsv")
        assert (tmp_path / "emb.tsv").read_bytes() == (out / "embeddings.tsv").read_bytes()
        losses = kio.read_training_log(out / "train_log.csv")
        kio.write_training_log(losses, tmp_path / "log.csv")
        assert (tmp_path / "log.csv").read_bytes() == (out / "train_log.csv").read_bytes()
        for curve_file in sorted((out / "hitk").glob("*.csv")):
            curve, n = kio.read_curve(curve_file)
            kio.write_curve(curve, tmp_path / "c.csv", n)
            assert (tmp_path / "c.csv").read_bytes() == curve_file.read_bytes()
        rows = kio.read_labels(out / "labels.tsv")
        assert rows and all(1 <= r[1] <= 5 for r in rows)
        proj = kio.read_projection(out / "projection.csv")
        assert len(proj) == len(space.g1) + len(space.g2)
        assert kio.read_pairs(out / "test_pairs.tsv")
        assert kio.read_config(out / "effective_config.txt")["synth"] == "True"
        for name in ("activations.csv", "test_activations.csv"):
            load_activations(out / "inputs" / name)
        checked += ["embeddings", "train_log", "hitk", "labels", "projection"]
        info["artifacts"] = len(checked)
