"""Skeleton graph serialization.

Two interchangeable formats:

* ``edgelist`` — our plain text format: ``v x y z`` node lines (implicitly
  numbered from 0 in file order) followed by ``e i j`` edge lines.
* ``obj`` — Wavefront OBJ line set: ``v`` records plus ``l i j`` records
  with the usual 1-based OBJ indexing, viewable in standard 3D tools.

Coordinates are printed with ``repr`` so text round-trips are exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from treeskel.errors import InputError, ParseError
from treeskel.core_io.types import SkeletonGraph

__all__ = ["read_graph", "write_graph", "GRAPH_FORMATS"]

GRAPH_FORMATS = ("edgelist", "obj")

_OBJ_IGNORED = {"o", "g", "s", "mtllib", "usemtl", "vn", "vt"}


def write_graph(graph: SkeletonGraph, path: str | Path, format: str = "edgelist") -> None:
    if format not in GRAPH_FORMATS:
        raise InputError(f"unsupported graph format {format!r}")
    offset = 1 if format == "obj" else 0
    edge_tag = "l" if format == "obj" else "e"
    with open(path, "w") as fh:
        for x, y, z in graph.nodes:
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for i, j in graph.edges:
            fh.write(f"{edge_tag} {i + offset} {j + offset}\n")


def read_graph(path: str | Path, format: str = "edgelist") -> SkeletonGraph:
    if format not in GRAPH_FORMATS:
        raise InputError(f"unsupported graph format {format!r}")
    path = Path(path)
    offset = 1 if format == "obj" else 0
    edge_tag = "l" if format == "obj" else "e"

    nodes: list[list[float]] = []
    edges: list[list[int]] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        tag = fields[0]
        if tag == "v":
            if len(fields) != 4:
                raise ParseError(f"{path}: line {lineno}: malformed node line {line!r}")
            try:
                nodes.append([float(v) for v in fields[1:]])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric coordinate") from None
        elif tag == edge_tag:
            if len(fields) != 3:
                raise ParseError(f"{path}: line {lineno}: malformed edge line {line!r}")
            try:
                i, j = int(fields[1]) - offset, int(fields[2]) - offset
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-integer edge index") from None
            edges.append([i, j])
        elif format == "obj" and tag in _OBJ_IGNORED:
            continue
        else:
            raise ParseError(f"{path}: line {lineno}: unrecognized record {tag!r}")

    node_arr = np.array(nodes, dtype=np.float64).reshape(-1, 3)
    edge_arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    try:
        return SkeletonGraph(node_arr, edge_arr)
    except InputError as exc:
        raise ParseError(f"{path}: {exc}") from None
