"""Readers and writers for pipeline artifacts.

Floats are written with ``repr`` so every write/read round trip is exact.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .align import EmbeddingSpace
from .errors import FormatError
from .evaluate import HitCurve
from .projection import Projection2D


def _text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def write_embeddings(space: EmbeddingSpace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for gid in (1, 2):
            for i, (label, vec) in enumerate(zip(space.labels(gid), space.matrix(gid))):
                fh.write(f"{gid}\t{i}\t{label}\t{' '.join(repr(float(v)) for v in vec)}\n")


def read_embeddings(path) -> EmbeddingSpace:
    rows = {1: [], 2: []}
    for lineno, line in enumerate(_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(f"expected 4 tab-separated fields, got {len(fields)}", lineno)
        try:
            gid, idx = int(fields[0]), int(fields[1])
            vec = [float(v) for v in fields[3].split(" ")]
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
        if gid not in rows:
            raise FormatError(f"graph id must be 1 or 2, got {gid}", lineno)
        if idx != len(rows[gid]):
            raise FormatError(f"node index {idx} out of sequence for graph {gid}", lineno)
        rows[gid].append((fields[2], vec))
    dims = {len(v) for r in rows.values() for _, v in r}
    if len(dims) > 1:
        raise FormatError("embedding vectors have inconsistent lengths")
    dim = dims.pop() if dims else 0
    mats = [np.array([v for _, v in rows[g]], dtype=np.float64).reshape(len(rows[g]), dim) for g in (1, 2)]
    return EmbeddingSpace(mats[0], mats[1], [l for l, _ in rows[1]], [l for l, _ in rows[2]])


def write_training_log(losses, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(losses, start=1):
            fh.write(f"{epoch},{float(loss)!r}\n")


def read_training_log(path) -> list[float]:
    rows = list(csv.reader(io.StringIO(_text(path))))
    if not rows or rows[0] != ["epoch", "loss"]:
        raise FormatError("training log must start with 'epoch,loss'", 1)
    return [float(r[1]) for r in rows[1:] if r]


def write_pairs(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in pairs:
            fh.write(f"{a}\t{b}\n")


def read_pairs(path) -> list[tuple[str, str]]:
    """Label-to-label TSV (``kg_label<TAB>cnn_label``)."""
    pairs = []
    for lineno, line in enumerate(_text(path).splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise FormatError(f"expected 2 tab-separated fields, got {len(fields)}", lineno)
        pairs.append((fields[0].strip(), fields[1].strip()))
    return pairs


def read_lines(path) -> list[str]:
    """Non-empty, non-comment lines, stripped (seed and extra lists)."""
    return [l.strip() for l in _text(path).splitlines() if l.strip() and not l.lstrip().startswith("#")]


def write_curve(curve: HitCurve, path, n_images: int | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if n_images is not None:
            fh.write(f"# images: {n_images}\n")
        fh.write("k,value,perfect\n")
        for k, v, p in zip(curve.ks, curve.values, curve.perfect):
            fh.write(f"{k},{v!r},{p!r}\n")


def read_curve(path) -> tuple[HitCurve, int | None]:
    n_images = None
    ks, values, perfect = [], [], []
    for lineno, line in enumerate(_text(path).splitlines(), start=1):
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            if key.strip() == "images":
                n_images = int(val)
            continue
        if not line.strip() or line == "k,value,perfect":
            continue
        try:
            k, v, p = line.split(",")
            ks.append(int(k))
            values.append(float(v))
            perfect.append(float(p))
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
    return HitCurve(ks, values, perfect), n_images


def write_labels(rows, path) -> None:
    """``rows``: iterable of ``(feature_id, [(kg_label, distance), ...])``."""
    with open(path, "w", encoding="utf-8") as fh:
        for fid, ranked in rows:
            for rank, (label, dist) in enumerate(ranked, start=1):
                fh.write(f"{fid}\t{rank}\t{label}\t{float(dist)!r}\n")


def read_labels(path) -> list[tuple[str, int, str, float]]:
    out = []
    for lineno, line in enumerate(_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(f"expected 4 tab-separated fields, got {len(fields)}", lineno)
        out.append((fields[0], int(fields[1]), fields[2], float(fields[3])))
    return out


PROJECTION_KINDS = {
    (1, "seed"): "kg-output",
    (1, "extra"): "kg-other",
    (1, "other"): "kg-other",
    (2, "output"): "cnn-output",
    (2, "feature"): "cnn-feature",
}


def projection_kind(graph_id: int, kind: str) -> str:
    return PROJECTION_KINDS.get((graph_id, kind), f"g{graph_id}-{kind}")


def write_projection(proj: Projection2D, space: EmbeddingSpace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["graph_id", "node_index", "label", "kind", "x", "y"])
        for (gid, idx), (x, y) in zip(proj.keys, proj.coords):
            w.writerow([gid, idx, space.labels(gid)[idx], projection_kind(gid, space.kinds(gid)[idx]),
                        repr(float(x)), repr(float(y))])


def read_projection(path) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(_text(path))))
    for r in rows:
        r["graph_id"], r["node_index"] = int(r["graph_id"]), int(r["node_index"])
        r["x"], r["y"] = float(r["x"]), float(r["y"])
    return rows


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment line."""
    cfg = {}
    for lineno, line in enumerate(_text(path).splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise FormatError("expected 'key = value'", lineno)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def write_config(cfg: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")
