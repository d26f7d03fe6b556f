import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgalign.cnn_graph import (
    ActivationDataset,
    CorrelationTable,
    anchor_outputs,
    build_cnn_graph,
    compute_correlations,
    concept_degrees,
    format_activations,
    load_activations,
    pearson,
    round_half_up,
    seed_incident_edges,
)
from kgalign.errors import ConfigError, EmptyGraphError, FormatError

from conftest import make_kg, random_kg


def pearson_oracle(x, y):
    """Direct population-moment formula in plain Python."""
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    vx = math.fsum((a - mx) ** 2 for a in x) / n
    vy = math.fsum((b - my) ** 2 for b in y) / n
    if len(set(x)) == 1 or len(set(y)) == 1:
        return 0.0
    if vx * vy == 0.0:
        return None  # variance product underflowed; no usable reference
    return cov / math.sqrt(vx * vy)


def test_pearson_examples():
    assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [5, 5, 5]) == 0.0
    # hand-derived: 9 / sqrt(84)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(9 / math.sqrt(84), abs=1e-12)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(pearson_oracle([1, 2, 3], [1, 2, 4]), abs=1e-12)


def test_pearson_constant_float_column_is_degenerate():
    assert pearson([0.1] * 7, np.arange(7.0)) == 0.0


@pytest.mark.parametrize("x,y", [([1, 2], [1, 2, 3]), ([1], [1])])
def test_pearson_argument_errors(x, y):
    with pytest.raises(ValueError):
        pearson(x, y)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=30))
def test_pearson_matches_oracle_and_bounded(xy):
    x, y = zip(*xy)
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    ref = pearson_oracle(x, y)
    if ref is not None and abs(ref) <= 1.0:
        assert r == pytest.approx(ref, abs=1e-8)


def _dataset(rng, n=6, F=3, C=2):
    return ActivationDataset(rng.normal(size=(n, F)), rng.normal(size=(n, C)), rng.integers(0, C, n),
                             [f"c{i}" for i in range(C)], [f"f{i}" for i in range(F)])


def test_correlations_match_entrywise_oracle(rng):
    ds = _dataset(rng)
    table = compute_correlations(ds)
    for c in range(2):
        for f in range(3):
            assert table.r[c, f] == pytest.approx(pearson_oracle(list(ds.features[:, f]), list(ds.outputs[:, c])),
                                                  abs=1e-12)


def test_correlation_identity_and_constant_column(rng):
    ds = _dataset(rng, n=10, F=4, C=2)
    ds.features[:, 1] = ds.outputs[:, 0]
    ds.features[:, 3] = 2.5
    r = compute_correlations(ds).r
    assert r[0, 1] == pytest.approx(1.0)
    assert np.all(r[:, 3] == 0)


def test_class_scope_restricts_rows_and_warns(rng):
    ds = _dataset(rng, n=8, F=3, C=3)
    ds.labels[:] = [0, 0, 0, 0, 1, 1, 1, 2]
    table = compute_correlations(ds, scope="class_images")
    mask = ds.labels == 0
    for f in range(3):
        assert table.r[0, f] == pytest.approx(pearson_oracle(list(ds.features[mask, f]), list(ds.outputs[mask, 0])))
    assert np.all(table.r[2] == 0)
    assert len(table.warnings) == 1 and "c2" in table.warnings[0]


def test_load_activations_round_trip(rng):
    ds = _dataset(rng, n=3, F=2, C=2)
    back = load_activations(io.StringIO(format_activations(ds)))
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.outputs, ds.outputs)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.class_names == ds.class_names and back.feature_ids == ds.feature_ids


def test_load_activations_short_row_names_row():
    text = "2,4,1\ncat\nf0,f1,f2,f3\n0,1,2,3,9\n0,1,2,3,4,9\n"
    with pytest.raises(FormatError, match="row 1"):
        load_activations(io.StringIO(text))


@pytest.mark.parametrize("text", [
    "1,1,1\nc\nf\n0,1,2\n",  # fewer than 2 images
    "2,1,1\nc\nf\n0,1,2\n3,1,2\n",  # label out of range
    "2,1,1\nc,d\nf\n0,1,2\n0,1,2\n",  # class count mismatch
    "3,1,1\nc\nf\n0,1,2\n0,1,2\n",  # missing row
])
def test_load_activations_errors(text):
    with pytest.raises(FormatError):
        load_activations(io.StringIO(text))


def test_reference_scale_dimensions_load(tmp_path):
    F, C = 25088, 1000
    ds = ActivationDataset(np.ones((2, F)), np.zeros((2, C)), [0, 999],
                           [f"c{i}" for i in range(C)], [f"f{i}" for i in range(F)])
    path = tmp_path / "big.csv"
    path.write_text(format_activations(ds))
    back = load_activations(path)
    assert back.features.shape == (2, F) and back.outputs.shape == (2, C) and back.labels[1] == 999


def test_reference_budget_arithmetic():
    assert round_half_up(0.10 * 289944) == 28994


def _leopard_kg():
    return make_kg(2, 2, [(0, 1, 2.0), (0, 2, 1.0), (1, 3, 1.0)])


def test_anchor_mirror_and_empty():
    kg = _leopard_kg()
    assert anchor_outputs(kg, ["s0", "s1"]) == [(0, 1, 2.0)]
    assert anchor_outputs(make_kg(2, 1, [(0, 2, 1.0)]), ["s0", "s1"]) == []
    with pytest.raises(ConfigError, match="nope"):
        anchor_outputs(kg, ["s0", "nope"])


def test_anchor_count_matches_edge_scan(rng):
    kg = random_kg(rng)
    seeds = kg.seed_nodes
    expected = sum(1 for a, b, _ in kg.edges if a in seeds and b in seeds)
    assert len(anchor_outputs(kg, [kg.labels[s] for s in sorted(seeds)])) == expected


def _select_oracle(r, m):
    cand = [(-r[c, f], f, c) for c in range(r.shape[0]) for f in range(r.shape[1]) if r[c, f] > 0]
    return [(c, f) for _, f, c in sorted(cand)[:m]]


def _feature_edges(cnn, corr):
    n_out = len(corr.class_names)
    fid = {name: i for i, name in enumerate(corr.feature_ids)}
    return sorted((a, fid[cnn.labels[b]]) for a, b, _ in cnn.edges if b >= n_out)


def test_total_small_case_matches_sort_oracle():
    r = np.array([[0.9, -0.2, 0.5], [0.5, 0.7, 0.0]])
    kg = make_kg(2, 4, [(0, 2, 1.0), (0, 3, 1.0), (1, 4, 1.0), (1, 5, 1.0)])
    corr = CorrelationTable(r, ["s0", "s1"], ["f0", "f1", "f2"])
    cnn, kg_out = build_cnn_graph(corr, kg, "total", 0.5)
    assert _feature_edges(cnn, corr) == sorted(_select_oracle(r, 2)) == [(0, 0), (1, 1)]
    assert kg_out is kg
    assert all(w > 0 for _, _, w in cnn.edges)


def test_tie_break_prefers_lower_feature_then_class():
    r = np.array([[0.5, 0.5], [0.5, 0.5]])
    kg = make_kg(2, 2, [(0, 2, 1.0), (1, 3, 1.0)])
    corr = CorrelationTable(r, ["s0", "s1"], ["f0", "f1"])
    cnn, _ = build_cnn_graph(corr, kg, "total", 0.5)
    assert _feature_edges(cnn, corr) == [(0, 0)]


def test_no_positive_correlations():
    corr = CorrelationTable(-np.ones((2, 3)), ["s0", "s1"], ["f0", "f1", "f2"])
    with pytest.raises(EmptyGraphError):
        build_cnn_graph(corr, _leopard_kg(), "total", 1.0)


def test_bad_fraction_and_strategy():
    corr = CorrelationTable(np.ones((2, 1)), ["s0", "s1"], ["f0"])
    with pytest.raises(ConfigError):
        build_cnn_graph(corr, _leopard_kg(), "total", 0.0)
    with pytest.raises(ConfigError):
        build_cnn_graph(corr, _leopard_kg(), "sideways", 0.5)


def _random_case(seed, C=20, F=200):
    rng = np.random.default_rng(seed)
    kg = random_kg(rng, n_seeds=C)
    corr = CorrelationTable(rng.uniform(-1, 1, (C, F)), [f"s{i}" for i in range(C)], [f"f{i}" for i in range(F)])
    return kg, corr


def _cnn_degree(cnn, n_out):
    deg = np.zeros(n_out, dtype=int)
    for a, b, _ in cnn.edges:
        if b >= n_out:
            deg[a] += 1
    return deg


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("fraction", [0.1, 0.35, 1.0])
def test_budget_and_degree_invariants(seed, fraction):
    kg, corr = _random_case(seed)
    C = len(corr.class_names)
    E = len(seed_incident_edges(kg))
    m = round_half_up(fraction * E)
    positives = int((corr.r > 0).sum())

    cnn, _ = build_cnn_graph(corr, kg, "total", fraction)
    assert _cnn_degree(cnn, C).sum() == min(m, positives)

    cnn, trimmed = build_cnn_graph(corr, kg, "kgtocnn", fraction)
    k = _cnn_degree(cnn, C)
    assert k.sum() == min(m, positives)
    before = concept_degrees(kg, range(C))
    after = concept_degrees(trimmed, range(C))
    assert after == [min(int(kc), d) for kc, d in zip(k, before)]
    # the trimmed graph keeps the heaviest edges of every seed
    for s in range(C):
        kept = sorted(w for a, b, w in trimmed.edges if s in (a, b) and min(a, b) == s and max(a, b) >= C)
        all_w = sorted((w for a, b, w in kg.edges if a == s and b >= C), reverse=True)
        assert sorted(kept, reverse=True) == all_w[: len(kept)]

    cnn, out_kg = build_cnn_graph(corr, kg, "cnntokg", fraction)
    assert out_kg is kg
    pos_per_row = (corr.r > 0).sum(axis=1)
    expected = [min(math.ceil(fraction * d), int(p)) for d, p in zip(before, pos_per_row)]
    assert list(_cnn_degree(cnn, C)) == expected

    for g in (cnn,):
        feats = g.feature_nodes
        deg = g.degrees()
        assert all(deg[f] >= 1 for f in feats)


@pytest.mark.parametrize("strategy", ["total", "cnntokg"])
def test_edge_sets_grow_with_fraction(strategy):
    kg, corr = _random_case(7)
    prev = set()
    for t in np.linspace(0.1, 1.0, 10):
        cnn, _ = build_cnn_graph(corr, kg, strategy, float(t))
        cur = set(_feature_edges(cnn, corr))
        assert prev <= cur
        prev = cur


def test_anchor_edges_mirror_output_graph():
    kg, corr = _random_case(3)
    cnn, trimmed = build_cnn_graph(corr, kg, "kgtocnn", 0.5)
    C = len(corr.class_names)
    out_edges = {(a, b) for a, b, _ in cnn.edges if b < C}
    kg_edges = {(a, b) for a, b, _ in trimmed.edges if a < C and b < C}
    assert out_edges == kg_edges
