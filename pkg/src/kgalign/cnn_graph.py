"""Activation ingestion, Pearson feature importance and CNN-graph construction.

Activation CSV layout::

    n_images,n_features,n_classes
    class_0,class_1,...
    feature_0,feature_1,...
    label,f_1,...,f_F,o_1,...,o_C      (one row per image)
"""
from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyGraphError, FormatError
from .graph import CnnGraph, KnowledgeGraph, canonical_edges

log = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    TOTAL = "total"
    KG_TO_CNN = "kgtocnn"
    CNN_TO_KG = "cnntokg"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "").replace("-", ""))
        except ValueError:
            raise ConfigError(f"unknown strategy {value!r}; choose total, kgtocnn or cnntokg") from None


@dataclass
class ActivationDataset:
    features: np.ndarray  # n_images x n_features, flatten-layer activations
    outputs: np.ndarray  # n_images x n_classes, pre-softmax scores
    labels: np.ndarray
    class_names: list[str]
    feature_ids: list[str]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = list(self.class_names)
        self.feature_ids = list(self.feature_ids)
        n = self.features.shape[0]
        if self.features.ndim != 2 or self.outputs.ndim != 2:
            raise ValueError("features and outputs must be 2-D")
        if self.outputs.shape[0] != n or self.labels.shape != (n,):
            raise ValueError("image counts disagree between features, outputs and labels")
        if self.features.shape[1] != len(self.feature_ids):
            raise ValueError("feature_ids length does not match feature columns")
        if self.outputs.shape[1] != len(self.class_names):
            raise ValueError("class_names length does not match output columns")
        if n < 2:
            raise ValueError("at least 2 images are required")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label out of range")

    @property
    def n_images(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.outputs.shape[1]


def load_activations(source) -> ActivationDataset:
    """Read an activation CSV from a path or an open (text or binary) file."""
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 3:
        raise FormatError("activation file needs a header, class names and feature ids")
    try:
        n_images, n_features, n_classes = (int(v) for v in rows[0])
    except ValueError:
        raise FormatError("header must be n_images,n_features,n_classes", 1) from None
    if n_images < 2:
        raise FormatError(f"need at least 2 images, header declares {n_images}", 1)
    class_names, feature_ids = rows[1], rows[2]
    if len(class_names) != n_classes:
        raise FormatError(f"expected {n_classes} class names, got {len(class_names)}", 2)
    if len(feature_ids) != n_features:
        raise FormatError(f"expected {n_features} feature ids, got {len(feature_ids)}", 3)
    data = rows[3:]
    if len(data) != n_images:
        raise FormatError(f"header declares {n_images} image rows, found {len(data)}")
    width = 1 + n_features + n_classes
    labels = np.empty(n_images, dtype=np.int64)
    values = np.empty((n_images, n_features + n_classes), dtype=np.float64)
    for i, row in enumerate(data):
        # messages name the image row (1-based) as well as the file line
        where = f"row {i + 1}"
        if len(row) != width:
            raise FormatError(f"{where}: expected {width} fields, got {len(row)}", i + 4)
        try:
            labels[i] = int(row[0])
            values[i] = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}", i + 4) from None
        if not 0 <= labels[i] < n_classes:
            raise FormatError(f"{where}: label {labels[i]} out of range", i + 4)
    return ActivationDataset(values[:, :n_features], values[:, n_features:], labels,
                             [c.strip() for c in class_names], [f.strip() for f in feature_ids])


def format_activations(ds: ActivationDataset) -> str:
    out = io.StringIO()
    out.write(f"{ds.n_images},{ds.n_features},{ds.n_classes}\n")
    out.write(",".join(ds.class_names) + "\n")
    out.write(",".join(ds.feature_ids) + "\n")
    for label, f, o in zip(ds.labels, ds.features, ds.outputs):
        out.write(",".join([str(int(label))] + [repr(float(v)) for v in f] + [repr(float(v)) for v in o]))
        out.write("\n")
    return out.getvalue()


def write_activations(ds: ActivationDataset, path) -> None:
    Path(path).write_text(format_activations(ds), encoding="utf-8")


def _is_constant(v: np.ndarray) -> bool:
    return bool(np.all(v == v[0]))


def pearson(x, y) -> float:
    """Pearson correlation with population moments; 0 when either input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("pearson needs two 1-D vectors of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least 2 samples")
    if _is_constant(x) or _is_constant(y):
        return 0.0
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy))))
    return min(1.0, max(-1.0, r))


def _correlation_block(features: np.ndarray, outputs: np.ndarray) -> np.ndarray:
    """Pearson r between every output column and every feature column (classes x features)."""
    fc = features - features.mean(axis=0)
    oc = outputs - outputs.mean(axis=0)
    num = oc.T @ fc
    f_ss = np.einsum("ij,ij->j", fc, fc)
    o_ss = np.einsum("ij,ij->j", oc, oc)
    denom = np.sqrt(np.outer(o_ss, f_ss))
    f_const = np.all(features == features[0], axis=0)
    o_const = np.all(outputs == outputs[0], axis=0)
    degenerate = np.logical_or.outer(o_const, f_const)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(degenerate, 0.0, num / np.where(degenerate, 1.0, denom))
    return np.clip(r, -1.0, 1.0)


@dataclass
class CorrelationTable:
    r: np.ndarray  # n_classes x n_features
    class_names: list[str]
    feature_ids: list[str]
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.r.shape != (len(self.class_names), len(self.feature_ids)):
            raise ValueError("correlation matrix shape does not match names")
        finite = self.r[np.isfinite(self.r)]
        if finite.size and (finite.min() < -1 or finite.max() > 1):
            raise ValueError("correlations must lie in [-1, 1]")


def compute_correlations(ds: ActivationDataset, scope: str = "all_images") -> CorrelationTable:
    """Per-class feature importance as Pearson r between activations and class scores.

    ``scope="all_images"`` correlates over every image; ``"class_images"``
    restricts row ``c`` to images labelled ``c``. Rows with fewer than two
    images under the class scope are zero and produce a warning.
    """
    warnings: list[str] = []
    if scope == "all_images":
        r = _correlation_block(ds.features, ds.outputs)
    elif scope == "class_images":
        r = np.zeros((ds.n_classes, ds.n_features))
        for c in range(ds.n_classes):
            mask = ds.labels == c
            if mask.sum() < 2:
                msg = f"class {ds.class_names[c]!r} has {int(mask.sum())} image(s); correlations set to 0"
                log.warning(msg)
                warnings.append(msg)
                continue
            r[c] = _correlation_block(ds.features[mask], ds.outputs[mask][:, [c]])[0]
    else:
        raise ConfigError(f"unknown correlation scope {scope!r}")
    return CorrelationTable(r, list(ds.class_names), list(ds.feature_ids), warnings)


def resolve_classes(kg: KnowledgeGraph, class_names) -> list[int]:
    """Map class names to knowledge-graph seed indices (case-insensitive)."""
    seeds = kg.seed_nodes
    resolved, missing = [], []
    for name in class_names:
        i = kg.index.get(name.strip().lower())
        if i is None or i not in seeds:
            missing.append(name)
        else:
            resolved.append(i)
    if missing:
        raise ConfigError(f"class names not found among knowledge-graph seeds: {', '.join(missing)}")
    return resolved


def anchor_outputs(kg: KnowledgeGraph, class_names) -> list[tuple[int, int, float]]:
    """Output-output edges mirroring kg edges between the corresponding concepts.

    Endpoints are class indices (which are also the CNN output node indices).
    """
    nodes = resolve_classes(kg, class_names)
    cls_of = {node: c for c, node in enumerate(nodes)}
    edges = []
    for a, b, w in kg.edges:
        if a in cls_of and b in cls_of:
            edges.append((cls_of[a], cls_of[b], w))
    return list(canonical_edges(edges))


def seed_incident_edges(kg: KnowledgeGraph) -> list[tuple[int, int, float]]:
    seeds = kg.seed_nodes
    return [e for e in kg.edges if e[0] in seeds or e[1] in seeds]


def concept_degrees(kg: KnowledgeGraph, nodes) -> list[int]:
    """Per node, the number of edges to non-seed nodes.

    Seed-seed edges are mirrored on the CNN side as anchor edges, so the
    edges that correspond to output-feature edges are the ones leaving the
    seed set.
    """
    seeds = kg.seed_nodes
    deg = dict.fromkeys(nodes, 0)
    for a, b, _ in kg.edges:
        if a in deg and b not in seeds:
            deg[a] += 1
        if b in deg and a not in seeds:
            deg[b] += 1
    return [deg[n] for n in nodes]


def _ranked_candidates(r: np.ndarray):
    """Positive entries sorted by descending r, then feature index, then class index."""
    cls, feat = np.nonzero(r > 0)
    vals = r[cls, feat]
    order = np.lexsort((cls, feat, -vals))
    return cls[order], feat[order], vals[order]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def trim_kg(kg: KnowledgeGraph, budget: dict[int, int]) -> KnowledgeGraph:
    """Keep only the top-``budget[s]`` heaviest non-seed edges of each seed ``s`` in ``budget``."""
    seeds = kg.seed_nodes
    per_node: dict[int, list[tuple[float, int, int]]] = {s: [] for s in budget}
    keep = []
    for pos, (a, b, w) in enumerate(kg.edges):
        owner = None
        if a in budget and b not in seeds:
            owner, other = a, b
        elif b in budget and a not in seeds:
            owner, other = b, a
        if owner is None:
            keep.append(pos)
        else:
            per_node[owner].append((-w, other, pos))
    for s, cand in per_node.items():
        cand.sort()
        keep.extend(pos for _, _, pos in cand[: budget[s]])
    edges = [kg.edges[p] for p in sorted(keep)]
    return KnowledgeGraph(kg.labels, kg.kinds, edges)


def build_cnn_graph(corr: CorrelationTable, kg: KnowledgeGraph, strategy="total",
                    fraction: float = 0.1) -> tuple[CnnGraph, KnowledgeGraph]:
    """Select output-feature edges under an edge budget and assemble the CNN graph.

    The budget is ``m = round(fraction * E)`` where ``E`` counts the kg edges
    touching a seed. ``TOTAL`` takes the ``m`` largest positive correlations;
    ``KGtoCNN`` does the same and then trims each seed's non-seed kg edges to
    match its CNN feature degree; ``CNNtoKG`` gives each class
    ``ceil(fraction * d_c)`` features, ``d_c`` being its non-seed kg degree.
    Output nodes take indices ``0..C-1``; feature nodes follow in ascending
    feature-column order.
    """
    strategy = Strategy.parse(strategy)
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    class_nodes = resolve_classes(kg, corr.class_names)
    cls, feat, vals = _ranked_candidates(corr.r)
    if cls.size == 0:
        raise EmptyGraphError("no positive correlations; the CNN graph would have no feature edges")

    m = round_half_up(fraction * len(seed_incident_edges(kg)))
    out_kg = kg
    if strategy in (Strategy.TOTAL, Strategy.KG_TO_CNN):
        sel = slice(0, m)
        cls, feat, vals = cls[sel], feat[sel], vals[sel]
        if strategy is Strategy.KG_TO_CNN:
            k = np.bincount(cls, minlength=len(class_nodes))
            out_kg = trim_kg(kg, {node: int(k[c]) for c, node in enumerate(class_nodes)})
    else:
        quota = [math.ceil(fraction * d) for d in concept_degrees(kg, class_nodes)]
        taken = np.zeros(len(class_nodes), dtype=np.int64)
        keep = np.zeros(cls.size, dtype=bool)
        for i, c in enumerate(cls):
            if taken[c] < quota[c]:
                taken[c] += 1
                keep[i] = True
        cls, feat, vals = cls[keep], feat[keep], vals[keep]

    n_out = len(corr.class_names)
    used = np.unique(feat)
    node_of_feature = {int(f): n_out + i for i, f in enumerate(used)}
    labels = list(corr.class_names) + [corr.feature_ids[f] for f in used]
    kinds = ["output"] * n_out + ["feature"] * len(used)
    edges = list(anchor_outputs(out_kg, corr.class_names))
    edges += [(int(c), node_of_feature[int(f)], float(v)) for c, f, v in zip(cls, feat, vals)]
    return CnnGraph(labels, kinds, canonical_edges(edges)), out_kg
