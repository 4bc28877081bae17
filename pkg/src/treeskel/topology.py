"""From contracted skeleton points to a simplified topology graph.

Farthest point sampling thins the skeleton cloud, a Euclidean minimum
spanning tree connects the survivors, and degree-2 nodes are contracted
away so only branch tips (degree 1) and junctions (degree >= 3) remain.
"""

from __future__ import annotations

import numpy as np

from treeskel.errors import InputError
from treeskel.core_io import LabeledPointCloud, SkeletonGraph, write_graph

__all__ = [
    "farthest_point_sampling",
    "minimum_spanning_tree",
    "simplify_graph",
    "export_graph",
    "default_sample_count",
]


def default_sample_count(n_points: int) -> int:
    """Down-sampling target used when the caller does not pick one."""
    return min(n_points, max(100, n_points // 50))


def farthest_point_sampling(
    cloud: LabeledPointCloud | np.ndarray, n: int, start_rule: str = "farthest_from_centroid"
) -> np.ndarray:
    """Greedy farthest point sampling; returns indices in selection order.

    Starts at the point farthest from the centroid (deterministic), then
    repeatedly adds the point maximizing the minimum distance to the
    selected set. Ties resolve to the lowest index.
    """
    points = cloud.positions if isinstance(cloud, LabeledPointCloud) else np.asarray(cloud)
    count = len(points)
    if not 1 <= n <= count:
        raise InputError(f"sample size must lie in [1, {count}], got {n}")
    if start_rule != "farthest_from_centroid":
        raise InputError(f"unknown start rule {start_rule!r}")

    start = int(np.argmax(np.linalg.norm(points - points.mean(axis=0), axis=1)))
    selected = [start]
    min_dist = np.linalg.norm(points - points[start], axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(points - points[nxt], axis=1))
    return np.array(selected, dtype=np.int64)


def minimum_spanning_tree(points: np.ndarray) -> SkeletonGraph:
    """Euclidean MST over the complete graph (Prim, O(V^2)).

    The scan order makes tie-breaking deterministic: on equal keys the
    lowest vertex index joins first and keeps its lowest-index parent.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n < 1:
        raise InputError("minimum spanning tree needs at least one point")
    if n == 1:
        return SkeletonGraph(points, np.zeros((0, 2), dtype=np.int64))

    in_tree = np.zeros(n, dtype=bool)
    key = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    key[0] = 0.0
    edges = []
    for _ in range(n):
        frontier = np.where(in_tree, np.inf, key)
        u = int(np.argmin(frontier))  # argmin takes the first = lowest index
        in_tree[u] = True
        if parent[u] >= 0:
            edges.append((parent[u], u))
        dist = np.linalg.norm(points - points[u], axis=1)
        better = ~in_tree & (dist < key)
        key[better] = dist[better]
        parent[better] = u
    return SkeletonGraph(points, np.array(edges, dtype=np.int64))


def simplify_graph(graph: SkeletonGraph) -> SkeletonGraph:
    """Contract away degree-2 nodes, keeping tips and junctions.

    Each degree-2 node is removed and its two incident edges fused into
    one. Node positions are untouched; the result is still a tree. A
    two-node input is already simplified. Raises on cyclic input (the MST
    upstream should have prevented that).
    """
    if not graph.is_tree():
        raise InputError("simplify_graph expects a tree (connected, |E| = |V| - 1)")

    adjacency = {i: set(map(int, nbrs)) for i, nbrs in enumerate(graph.adjacency())}
    removable = [node for node, nbrs in adjacency.items() if len(nbrs) == 2]
    while removable:
        node = removable.pop()
        if node not in adjacency or len(adjacency[node]) != 2:
            continue
        left, right = adjacency.pop(node)
        adjacency[left].discard(node)
        adjacency[right].discard(node)
        adjacency[left].add(right)
        adjacency[right].add(left)
        for endpoint in (left, right):
            if len(adjacency[endpoint]) == 2:
                removable.append(endpoint)

    kept = sorted(adjacency)
    index = {old: new for new, old in enumerate(kept)}
    nodes = graph.nodes[kept]
    edges = sorted(
        (index[a], index[b])
        for a in kept
        for b in adjacency[a]
        if index[a] < index[b]
    )
    return SkeletonGraph(nodes, np.array(edges, dtype=np.int64).reshape(-1, 2))


def export_graph(graph: SkeletonGraph, path, format: str = "edgelist") -> None:
    """Write the graph in one of the shared formats ('edgelist' or 'obj')."""
    write_graph(graph, path, format)
