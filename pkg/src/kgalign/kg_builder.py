"""Weighted triple parsing and one-hop knowledge-graph construction."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable

from .errors import ConfigError, ParseError
from .graph import KnowledgeGraph, canonical_edges


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str
    weight: float = 1.0

    def __post_init__(self):
        if not (self.head and self.relation and self.tail):
            raise ValueError("head, relation and tail must be non-empty")
        if not self.weight >= 0:
            raise ValueError(f"weight must be non-negative, got {self.weight}")


def _lines(stream) -> Iterable[str]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for line in stream:
        if isinstance(line, (bytes, bytearray)):
            line = line.decode("utf-8")
        yield line


def parse_triples(stream) -> list[Triple]:
    """Read ``head<TAB>relation<TAB>tail[<TAB>weight]`` records.

    ``stream`` may be a text or binary file object, a ``str`` or ``bytes``.
    Entity labels are trimmed and lower-cased; relation labels keep their
    case. Blank lines and ``#`` comments are skipped.
    """
    triples = []
    for lineno, line in enumerate(_lines(stream), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f.strip() for f in line.rstrip("\r\n").split("\t")]
        if len(fields) < 3:
            raise ParseError(f"expected at least 3 tab-separated fields, got {len(fields)}", lineno)
        head, relation, tail = fields[0].lower(), fields[1], fields[2].lower()
        if not (head and relation and tail):
            raise ParseError("empty head, relation or tail", lineno)
        weight = 1.0
        if len(fields) > 3 and fields[3]:
            try:
                weight = float(fields[3])
            except ValueError:
                raise ParseError(f"non-numeric weight {fields[3]!r}", lineno) from None
            if not math.isfinite(weight) or weight < 0:
                raise ParseError(f"weight must be finite and non-negative, got {fields[3]!r}", lineno)
        triples.append(Triple(head, relation, tail, weight))
    return triples


def build_kg(triples, seeds, relation_filter, extras=()) -> KnowledgeGraph:
    """One-hop expansion from ``seeds`` and ``extras`` along kept triples.

    A triple is kept when its relation is in ``relation_filter`` and at least
    one endpoint is a seed or extra. Node order: seeds, extras, then other
    entities by first appearance. Parallel triples keep the maximum weight.
    """
    seed_labels = list(dict.fromkeys(s.strip().lower() for s in seeds))
    if not seed_labels:
        raise ConfigError("at least one seed entity is required")
    seed_set = set(seed_labels)
    extra_labels = [e for e in dict.fromkeys(e.strip().lower() for e in extras) if e not in seed_set]
    anchors = seed_set | set(extra_labels)
    relation_filter = set(relation_filter)

    labels = seed_labels + extra_labels
    kinds = ["seed"] * len(seed_labels) + ["extra"] * len(extra_labels)
    index = {label: i for i, label in enumerate(labels)}
    edges = []
    for t in triples:
        if t.relation not in relation_filter or t.head == t.tail:
            continue
        if t.head not in anchors and t.tail not in anchors:
            continue
        for label in (t.head, t.tail):
            if label not in index:
                index[label] = len(labels)
                labels.append(label)
                kinds.append("other")
        edges.append((index[t.head], index[t.tail], t.weight))
    return KnowledgeGraph(labels, kinds, canonical_edges(edges))


def kg_degree_profile(kg: KnowledgeGraph) -> dict[int, int]:
    return {i: int(d) for i, d in enumerate(kg.degrees())}
