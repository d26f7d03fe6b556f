"""Node-indexed weighted undirected graphs and their TSV file format.

File layout::

    index<TAB>label<TAB>kind
    ...
    ---
    a<TAB>b<TAB>weight
    ...

``kind`` is one of ``seed``, ``extra``, ``other`` (knowledge graphs) or
``output``, ``feature`` (CNN graphs).
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError

KG_KINDS = ("seed", "extra", "other")
CNN_KINDS = ("output", "feature")
SECTION_BREAK = "---"

Edge = tuple[int, int, float]


def canonical_edges(edges: Iterable[Edge]) -> tuple[Edge, ...]:
    """Orient every edge as ``a < b`` and sort. Duplicate pairs keep the max weight."""
    best: dict[tuple[int, int], float] = {}
    for a, b, w in edges:
        a, b = int(a), int(b)
        if a == b:
            raise ValueError(f"self-loop on node {a}")
        key = (a, b) if a < b else (b, a)
        w = float(w)
        if key not in best or w > best[key]:
            best[key] = w
    return tuple((a, b, w) for (a, b), w in sorted(best.items()))


@dataclass(frozen=True)
class Graph:
    labels: tuple[str, ...]
    kinds: tuple[str, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "edges", tuple((int(a), int(b), float(w)) for a, b, w in self.edges))
        n = len(self.labels)
        if len(self.kinds) != n:
            raise ValueError("labels and kinds differ in length")
        if len(set(self.labels)) != n:
            raise ValueError("duplicate node labels")
        seen = set()
        for a, b, _ in self.edges:
            if not (0 <= a < b < n):
                raise ValueError(f"invalid edge ({a}, {b}) for {n} nodes")
            if (a, b) in seen:
                raise ValueError(f"duplicate edge ({a}, {b})")
            seen.add((a, b))

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def nodes_of_kind(self, *kinds: str) -> frozenset[int]:
        return frozenset(i for i, k in enumerate(self.kinds) if k in kinds)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for a, b, _ in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def neighbors(self) -> list[list[tuple[int, float]]]:
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n_nodes)]
        for a, b, w in self.edges:
            adj[a].append((b, w))
            adj[b].append((a, w))
        return adj


class KnowledgeGraph(Graph):
    """Graph whose nodes are knowledge-base entities.

    ``seed`` nodes correspond to model output classes, ``extra`` nodes are
    included without being seeds (unseen categories), everything else is
    ``other``.
    """

    @property
    def seed_nodes(self) -> frozenset[int]:
        return self.nodes_of_kind("seed")

    @property
    def extra_nodes(self) -> frozenset[int]:
        return self.nodes_of_kind("extra")


class CnnGraph(Graph):
    """Graph of classifier output nodes and visual-feature nodes."""

    @property
    def output_nodes(self) -> frozenset[int]:
        return self.nodes_of_kind("output")

    @property
    def feature_nodes(self) -> frozenset[int]:
        return self.nodes_of_kind("feature")


def format_graph(graph: Graph) -> str:
    out = io.StringIO()
    for i, (label, kind) in enumerate(zip(graph.labels, graph.kinds)):
        out.write(f"{i}\t{label}\t{kind}\n")
    out.write(SECTION_BREAK + "\n")
    for a, b, w in graph.edges:
        out.write(f"{a}\t{b}\t{w!r}\n")
    return out.getvalue()


def parse_graph(text: str) -> Graph:
    """Parse the graph TSV format, returning the most specific graph class."""
    labels, kinds, edges = [], [], []
    in_edges = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if line.strip() == SECTION_BREAK:
            if in_edges:
                raise FormatError("second section separator", lineno)
            in_edges = True
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError(f"expected 3 tab-separated fields, got {len(fields)}", lineno)
        try:
            if in_edges:
                edges.append((int(fields[0]), int(fields[1]), float(fields[2])))
            else:
                if int(fields[0]) != len(labels):
                    raise FormatError(f"node index {fields[0]} out of sequence", lineno)
                if fields[2] not in KG_KINDS + CNN_KINDS:
                    raise FormatError(f"unknown node kind {fields[2]!r}", lineno)
                labels.append(fields[1])
                kinds.append(fields[2])
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(str(exc), lineno) from None
    if not in_edges:
        raise FormatError("missing '---' section separator")
    kind_set = set(kinds)
    if kind_set <= set(KG_KINDS):
        cls = KnowledgeGraph
    elif kind_set <= set(CNN_KINDS):
        cls = CnnGraph
    else:
        cls = Graph
    try:
        return cls(labels, kinds, edges)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def write_graph(graph: Graph, path) -> None:
    Path(path).write_text(format_graph(graph), encoding="utf-8")


def read_graph(path) -> Graph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))
