"""Command-line driver: build graphs, align, evaluate and project.

Every subcommand accepts ``--config FILE`` (flat ``key = value``); flags
override config keys, which override built-in defaults. The effective
configuration is written next to the command's outputs.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io as kio
from .align import AlignedGraphPair, EmbeddingSpace, split_pairs, train
from .cnn_graph import Strategy, build_cnn_graph, compute_correlations, load_activations, write_activations
from .config import PipelineConfig
from .errors import ConfigError, KgAlignError
from .evaluate import aggregate_curves, activated_features, hit_at_1, hit_at_k_curve, label_feature
from .graph import Graph, read_graph, write_graph
from .kg_builder import build_kg, parse_triples
from .projection import pca_project, tsne_project
from .synth import gen_planted_pair, gen_world

log = logging.getLogger("kgalign")


# ---------------------------------------------------------------- stages

def resolve_label_pairs(g1: Graph, g2: Graph, label_pairs) -> list[tuple[int, int]]:
    """Turn ``(kg_label, cnn_label)`` pairs into node index pairs."""
    idx1 = {l.lower(): i for i, l in enumerate(g1.labels)}
    idx2 = dict(g2.index)
    idx2_folded = {l.lower(): i for i, l in enumerate(g2.labels)}
    out, missing = [], []
    for a, b in label_pairs:
        i = idx1.get(a.lower())
        j = idx2.get(b, idx2_folded.get(b.lower()))
        if i is None or j is None:
            missing.append(f"{a}/{b}")
        else:
            out.append((i, j))
    if missing:
        raise ConfigError(f"seed pairs with unknown labels: {', '.join(missing[:10])}")
    return out


def default_label_pairs(kg: Graph, cnn: Graph) -> list[tuple[str, str]]:
    """Pair every CNN output node with the kg node of the same (case-folded) label."""
    folded = {l.lower() for l in kg.labels}
    return [(cnn.labels[i], cnn.labels[i]) for i in sorted(cnn.nodes_of_kind("output"))
            if cnn.labels[i].lower() in folded]


def stage_build_kg(cfg: PipelineConfig, out: Path):
    cfg.check_inputs("triples", "seeds")
    with open(cfg.triples, "rb") as fh:
        triples = parse_triples(fh)
    extras = kio.read_lines(cfg.extras) if cfg.extras else []
    kg = build_kg(triples, kio.read_lines(cfg.seeds), cfg.relation_set(), extras)
    write_graph(kg, out)
    print(f"{kg.n_nodes} nodes, {kg.n_edges} edges")
    return kg


def stage_build_cnn(cfg: PipelineConfig, kg, out: Path, kg_out: Path | None):
    cfg.check_inputs("activations")
    ds = load_activations(cfg.activations)
    corr = compute_correlations(ds, cfg.scope)
    strategy = Strategy.parse(cfg.strategy)
    cnn, trimmed = build_cnn_graph(corr, kg, strategy, cfg.fraction)
    write_graph(cnn, out)
    n_feat_edges = sum(1 for a, b, _ in cnn.edges if cnn.kinds[b] == "feature")
    print(f"{cnn.n_nodes} nodes, {cnn.n_edges} edges ({n_feat_edges} feature edges)")
    if strategy is Strategy.KG_TO_CNN:
        kg_out = kg_out or out.with_name(out.stem + ".kg.tsv")
        write_graph(trimmed, kg_out)
        print(f"trimmed knowledge graph: {trimmed.n_nodes} nodes, {trimmed.n_edges} edges -> {kg_out}")
    return cnn, trimmed


def stage_align(cfg: PipelineConfig, kg, cnn, label_pairs, emb_out: Path, log_out: Path,
                test_out: Path | None = None):
    pairs = resolve_label_pairs(kg, cnn, label_pairs)
    train_pairs, test_pairs = split_pairs(pairs, cfg.ratio, cfg.seed)
    pair = AlignedGraphPair(kg, cnn, pairs, train_pairs, test_pairs)
    print(f"split: {len(train_pairs)}/{len(test_pairs)}")
    history: list[float] = []
    space = train(pair, cfg.train_config(), history)
    kio.write_embeddings(space, emb_out)
    kio.write_training_log(history, log_out)
    if test_out is not None:
        kio.write_pairs([(kg.labels[a], cnn.labels[b]) for a, b in test_pairs], test_out)
    score = hit_at_1(space, test_pairs)
    print(f"hit@1: {score:.4f}")
    return space, score


def attach_kinds(space: EmbeddingSpace, kg_path, cnn_path) -> EmbeddingSpace:
    kinds1 = read_graph(kg_path).kinds if kg_path else ["seed"] * len(space.g1)
    kinds2 = read_graph(cnn_path).kinds if cnn_path else ["output"] * len(space.g2)
    if len(kinds1) != len(space.g1) or len(kinds2) != len(space.g2):
        raise ConfigError("graph files do not match the embedding file node counts")
    return space.with_kinds(kinds1, kinds2)


def stage_hit1(space: EmbeddingSpace, label_pairs) -> float:
    idx1 = {l: i for i, l in enumerate(space.labels1)}
    idx2 = {l: i for i, l in enumerate(space.labels2)}
    pairs = []
    for a, b in label_pairs:
        if a not in idx1 and a.lower() not in idx1:
            raise ConfigError(f"unknown label {a!r}")
        if b not in idx2:
            raise ConfigError(f"unknown label {b!r}")
        pairs.append((idx1.get(a, idx1.get(a.lower())), idx2[b]))
    return hit_at_1(space, pairs)


def stage_hitk(space: EmbeddingSpace, cnn, activations_path, k: int, threshold: float,
               out_dir: Path, label: str | None = None):
    ds = load_activations(activations_path)
    kg_index = {l: i for i, l in enumerate(space.labels1)}
    if label is not None and label.lower() not in kg_index and label not in kg_index:
        raise ConfigError(f"unknown label {label!r}")
    ks = list(range(1, k + 1))
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = []
    for i in range(ds.n_images):
        name = ds.class_names[ds.labels[i]]
        if label is not None and name.lower() != label.lower():
            continue
        node = kg_index.get(name, kg_index.get(name.lower()))
        if node is None:
            raise ConfigError(f"unknown label {name!r}")
        active = activated_features(ds.features[i], cnn, threshold, ds.feature_ids)
        curve = hit_at_k_curve(space, node, active, ks)
        kio.write_curve(curve, out_dir / f"image_{i}_{name}.csv")
        curves.append(curve)
    if not curves:
        raise ConfigError(f"no test images carry label {label!r}")
    agg = aggregate_curves(curves)
    kio.write_curve(agg, out_dir / "aggregate.csv", n_images=len(curves))
    print(f"hit@k curves for {len(curves)} image(s); aggregate value at k=1: {agg.values[0]:.3f}, "
          f"k={k}: {agg.values[-1]:.3f}")
    return agg


def stage_labels(space: EmbeddingSpace, k: int, out: Path, feature: str | None = None):
    feats = [i for i, kind in enumerate(space.kinds2) if kind == "feature"]
    if feature is not None:
        if feature not in space.labels2:
            raise ConfigError(f"unknown label {feature!r}")
        feats = [space.labels2.index(feature)]
    rows = [(space.labels2[i], label_feature(space, i, k)) for i in feats]
    kio.write_labels(rows, out)
    print(f"labelled {len(rows)} feature node(s) -> {out}")
    return rows


def stage_project(space: EmbeddingSpace, cfg: PipelineConfig, out: Path):
    method = cfg.projection.lower()
    if method == "pca":
        proj = pca_project(space, cfg.seed)
    elif method == "tsne":
        proj = tsne_project(space, cfg.perplexity, cfg.tsne_iterations, cfg.seed)
    else:
        raise ConfigError(f"unknown projection method {cfg.projection!r}")
    kio.write_projection(proj, space, out)
    print(f"{len(proj.keys)} projected nodes -> {out}")
    return proj


def stage_synth(out_dir: Path, mode: str, seed: int, noise: float, n_nodes: int, avg_degree: float,
                edge_noise: float):
    out_dir.mkdir(parents=True, exist_ok=True)
    if mode == "pair":
        g1, g2, truth = gen_planted_pair(n_nodes, avg_degree, edge_noise, seed)
        write_graph(g1, out_dir / "g1.tsv")
        write_graph(g2, out_dir / "g2.tsv")
        kio.write_pairs([(g1.labels[a], g2.labels[b]) for a, b in truth], out_dir / "pairs.tsv")
        print(f"planted pair: {g1.n_nodes} nodes, {g1.n_edges}/{g2.n_edges} edges -> {out_dir}")
        return {}
    world = gen_world(noise_sigma=noise, rng_seed=seed)
    paths = {
        "triples": out_dir / "triples.tsv",
        "seeds": out_dir / "seeds.txt",
        "extras": out_dir / "extras.txt",
        "activations": out_dir / "activations.csv",
        "test_activations": out_dir / "test_activations.csv",
        "pairs": out_dir / "pairs.tsv",
    }
    with open(paths["triples"], "w", encoding="utf-8") as fh:
        fh.write("# head\trelation\ttail\tweight\n")
        for t in world.triples:
            fh.write(f"{t.head}\t{t.relation}\t{t.tail}\t{t.weight!r}\n")
    paths["seeds"].write_text("\n".join(world.seeds) + "\n", encoding="utf-8")
    paths["extras"].write_text("\n".join(world.extras) + "\n", encoding="utf-8")
    write_activations(world.activations, paths["activations"])
    write_activations(world.test_activations, paths["test_activations"])
    kio.write_pairs(world.seed_pairs, paths["pairs"])
    kio.write_pairs(world.feature_truth, out_dir / "feature_truth.tsv")
    print(f"synthetic world: {len(world.triples)} triples, {len(world.seeds)} classes, "
          f"{world.activations.n_features} features -> {out_dir}")
    return {k: str(v) for k, v in paths.items()}


# ---------------------------------------------------------------- commands

def _config(args, **flags) -> PipelineConfig:
    file_cfg = kio.read_config(args.config) if getattr(args, "config", None) else None
    if getattr(args, "config", None) and not Path(args.config).exists():
        raise ConfigError(f"config file not found: {args.config}")
    return PipelineConfig.resolve(file_cfg, flags)


def _echo(cfg: PipelineConfig, out: Path, name: str) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    kio.write_config(cfg.as_dict(), out.parent / f"{name}.config.txt")


def cmd_build_kg(args):
    cfg = _config(args, triples=args.triples, seeds=args.seeds, extras=args.extras, relations=args.relations,
                  seed=args.seed)
    out = Path(args.out)
    _echo(cfg, out, "build-kg")
    stage_build_kg(cfg, out)


def cmd_build_cnn_graph(args):
    cfg = _config(args, activations=args.activations, strategy=args.strategy, fraction=args.fraction,
                  scope=args.scope, seed=args.seed)
    if not Path(args.kg).exists():
        raise ConfigError(f"kg file not found: {args.kg}")
    out = Path(args.out)
    _echo(cfg, out, "build-cnn-graph")
    stage_build_cnn(cfg, read_graph(args.kg), out, Path(args.kg_out) if args.kg_out else None)


def cmd_align(args):
    cfg = _config(args, pairs=args.pairs, dim=args.dim, margin=args.margin, learning_rate=args.learning_rate,
                  epochs=args.epochs, negatives_per_pair=args.negatives, distance=args.distance,
                  ratio=args.ratio, seed=args.seed)
    for p in (args.kg, args.cnn_graph):
        if not Path(p).exists():
            raise ConfigError(f"graph file not found: {p}")
    kg, cnn = read_graph(args.kg), read_graph(args.cnn_graph)
    label_pairs = kio.read_pairs(cfg.pairs) if cfg.pairs else default_label_pairs(kg, cnn)
    out = Path(args.out)
    _echo(cfg, out, "align")
    stage_align(cfg, kg, cnn, label_pairs, out, Path(args.log or out.with_suffix(".log.csv")),
                Path(args.test_pairs_out) if args.test_pairs_out else None)


def cmd_eval(args):
    cfg = _config(args, k=getattr(args, "k", None), threshold=getattr(args, "threshold", None), seed=args.seed)
    if not Path(args.embeddings).exists():
        raise ConfigError(f"embeddings file not found: {args.embeddings}")
    space = attach_kinds(kio.read_embeddings(args.embeddings), getattr(args, "kg", None),
                         getattr(args, "cnn_graph", None))
    if args.metric == "hit1":
        score = stage_hit1(space, kio.read_pairs(args.pairs))
        print(f"{score:.6f}")
        if args.out:
            Path(args.out).write_text(f"hit@1\t{score!r}\n", encoding="utf-8")
    elif args.metric == "hitk":
        stage_hitk(space, read_graph(args.cnn_graph), args.activations, cfg.k, cfg.threshold,
                   Path(args.out_dir), args.label)
    else:
        stage_labels(space, args.k, Path(args.out), args.feature)


def cmd_project(args):
    cfg = _config(args, projection=args.method, perplexity=args.perplexity,
                  tsne_iterations=args.iterations, seed=args.seed)
    if not Path(args.embeddings).exists():
        raise ConfigError(f"embeddings file not found: {args.embeddings}")
    space = attach_kinds(kio.read_embeddings(args.embeddings), args.kg, args.cnn_graph)
    out = Path(args.out)
    _echo(cfg, out, "project")
    stage_project(space, cfg, out)


def cmd_synth(args):
    cfg = _config(args, seed=args.seed)
    if args.noise < 0 or not 0 <= args.edge_noise < 1:
        raise ConfigError("noise must be >= 0 and edge-noise in [0, 1)")
    stage_synth(Path(args.out_dir), args.mode, cfg.seed, args.noise, args.nodes, args.avg_degree,
                args.edge_noise)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage from one configuration; returns the artifact paths."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.synth:
        paths = stage_synth(out / "inputs", "world", cfg.seed, 0.1, 0, 0, 0)
        for key, value in paths.items():
            if not getattr(cfg, key):
                setattr(cfg, key, value)
    kio.write_config(cfg.as_dict(), out / "effective_config.txt")
    art = {
        "kg": out / "kg.tsv",
        "cnn": out / "cnn.tsv",
        "kg_trimmed": out / "cnn.kg.tsv",
        "embeddings": out / "embeddings.tsv",
        "log": out / "train_log.csv",
        "test_pairs": out / "test_pairs.tsv",
        "hit1": out / "hit1.txt",
        "hitk": out / "hitk",
        "labels": out / "labels.tsv",
        "projection": out / "projection.csv",
    }
    kg = stage_build_kg(cfg, art["kg"])
    cnn, kg_used = stage_build_cnn(cfg, kg, art["cnn"], art["kg_trimmed"])
    if kg_used is not kg:
        art["kg_aligned"] = art["kg_trimmed"]
    else:
        art["kg_aligned"] = art["kg"]
        art.pop("kg_trimmed")
    label_pairs = kio.read_pairs(cfg.pairs) if cfg.pairs else default_label_pairs(kg_used, cnn)
    space, score = stage_align(cfg, kg_used, cnn, label_pairs, art["embeddings"], art["log"], art["test_pairs"])
    art["hit1"].write_text(f"hit@1\t{score!r}\n", encoding="utf-8")
    if cfg.test_activations:
        cfg.check_inputs("test_activations")
        stage_hitk(space, cnn, cfg.test_activations, cfg.k, cfg.threshold, art["hitk"])
    else:
        art.pop("hitk")
    stage_labels(space, cfg.label_k, art["labels"])
    stage_project(space, cfg, art["projection"])
    return art


def cmd_pipeline(args):
    flags = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        flags[key.strip()] = value.strip()
    flags["out_dir"] = args.out_dir
    flags["seed"] = args.seed
    run_pipeline(_config(args, **flags))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kgalign", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, config=True):
        sp = sub.add_parser(name, help=help_)
        if config:
            sp.add_argument("--config", help="flat key = value configuration file")
        sp.set_defaults(func=func)
        return sp

    s = add("build-kg", cmd_build_kg, "build the knowledge graph from a triple file")
    s.add_argument("--triples")
    s.add_argument("--seeds", help="one seed label per line")
    s.add_argument("--extras", help="extra (unseen-category) labels, one per line")
    s.add_argument("--relations", help="comma-separated relation filter, e.g. IsA,HasA")
    s.add_argument("--seed", type=int, help="accepted for uniformity; this stage is deterministic")
    s.add_argument("--out", required=True)

    s = add("build-cnn-graph", cmd_build_cnn_graph, "build the CNN graph from activations")
    s.add_argument("--activations")
    s.add_argument("--kg", required=True)
    s.add_argument("--strategy", choices=["total", "kgtocnn", "cnntokg"])
    s.add_argument("--fraction", type=float)
    s.add_argument("--scope", choices=["all_images", "class_images"])
    s.add_argument("--seed", type=int, help="accepted for uniformity; this stage is deterministic")
    s.add_argument("--out", required=True)
    s.add_argument("--kg-out", help="trimmed knowledge graph (kgtocnn only)")

    s = add("align", cmd_align, "train the alignment embedding")
    s.add_argument("--kg", required=True)
    s.add_argument("--cnn-graph", required=True)
    s.add_argument("--pairs", help="seed pairs TSV kg_label<TAB>cnn_label")
    s.add_argument("--dim", type=int)
    s.add_argument("--margin", type=float)
    s.add_argument("--learning-rate", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--negatives", type=int)
    s.add_argument("--distance", choices=["L1", "L2"])
    s.add_argument("--ratio", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="embedding TSV")
    s.add_argument("--log", help="training log CSV")
    s.add_argument("--test-pairs-out")

    s = add("eval", cmd_eval, "evaluate an embedding space", config=False)
    ev = s.add_subparsers(dest="metric", required=True)
    e = ev.add_parser("hit1")
    e.add_argument("--embeddings", required=True)
    e.add_argument("--pairs", required=True)
    e.add_argument("--out")
    e = ev.add_parser("hitk")
    e.add_argument("--embeddings", required=True)
    e.add_argument("--kg")
    e.add_argument("--cnn-graph", required=True)
    e.add_argument("--activations", required=True)
    e.add_argument("--label")
    e.add_argument("--k", type=int)
    e.add_argument("--threshold", type=float)
    e.add_argument("--out-dir", required=True)
    e = ev.add_parser("label")
    e.add_argument("--embeddings", required=True)
    e.add_argument("--kg")
    e.add_argument("--cnn-graph", required=True)
    e.add_argument("--feature")
    e.add_argument("--k", type=int, default=5)
    e.add_argument("--out", required=True)
    for e in ev.choices.values():
        e.add_argument("--config")
        e.add_argument("--seed", type=int)

    s = add("project", cmd_project, "2-D projection of an embedding space")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--kg")
    s.add_argument("--cnn-graph")
    s.add_argument("--method", choices=["pca", "tsne"])
    s.add_argument("--perplexity", type=float)
    s.add_argument("--iterations", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)

    s = add("synth", cmd_synth, "write synthetic inputs with planted ground truth")
    s.add_argument("--mode", choices=["world", "pair"], default="world")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--noise", type=float, default=0.1, help="activation noise sigma (world mode)")
    s.add_argument("--nodes", type=int, default=200, help="pair mode")
    s.add_argument("--avg-degree", type=float, default=6.0, help="pair mode")
    s.add_argument("--edge-noise", type=float, default=0.0, help="pair mode")

    s = add("pipeline", cmd_pipeline, "run every stage from one configuration")
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int)
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (KgAlignError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
