"""Skeleton extraction by iterative Laplacian contraction.

The cloud is contracted toward a zero-volume curve set by repeatedly
solving, per coordinate, the stacked least-squares system

    [ W_L L ] C' = [   0    ]
    [  W_H  ]      [ W_H C ]

where L is a cotangent Laplacian built over local tangent-plane Delaunay
fans, W_L a (scalar) contraction weight amplified each iteration and W_H
per-point attraction weights that grow as the local one-ring collapses.

The semantic variant multiplies the Laplacian block element-wise with a
weight matrix S that amplifies rows of trunk points having no branch
neighbor by ``lambda_trunk``; because the weighting rule depends only on
the row's point, S is row-constant and the Hadamard product reduces to a
row scaling. With ``lambda_trunk`` = 1 both variants are identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu
from scipy.spatial import ConvexHull, Delaunay, cKDTree
from scipy.spatial import QhullError

from treeskel.errors import InputError, NumericalError
from treeskel.core_io import LabeledPointCloud, SemanticLabel

__all__ = [
    "ContractionError",
    "NeighborhoodGraph",
    "SparseLaplacian",
    "SemanticWeights",
    "ContractionParams",
    "IterationStats",
    "build_neighborhoods",
    "build_cotangent_laplacian",
    "build_semantic_weights",
    "contract_lbc",
    "contract_slbc",
]

# cot clamped to the value at 1 degree to keep sliver triangles bounded
_COT_MAX = 1.0 / np.tan(np.radians(1.0))
_ATTRACTION_CAP = 1e6  # overflow guard for fully collapsed one-rings


class ContractionError(NumericalError):
    """The contraction linear system could not be solved."""


@dataclass
class NeighborhoodGraph:
    """Local connectivity: symmetric adjacency plus tangent-plane triangles.

    ``isolated`` lists points that ended up in no triangle (degenerate
    neighborhoods); they receive zero Laplacian rows downstream.
    """

    neighbors: list[np.ndarray]
    triangles: np.ndarray  # (T, 3) global indices, each row sorted, deduplicated
    isolated: np.ndarray  # indices with no incident triangle


@dataclass
class SparseLaplacian:
    """Symmetric cotangent Laplacian; rows sum to zero, isolated rows are zero."""

    matrix: sparse.csr_matrix  # (N, N)
    isolated: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass
class SemanticWeights:
    """Row-constant weight matrix over the Laplacian pattern plus diagonal."""

    matrix: sparse.csr_matrix
    row_weights: np.ndarray  # (N,) each entry lambda_trunk or 1.0
    lambda_trunk: float


@dataclass
class ContractionParams:
    """Contraction schedule.

    contraction_weight = None derives the initial W_L as
    1 / (10 * sqrt(mean one-ring area)) of the input cloud. Zero is allowed
    and makes one iteration the identity (pure attraction).
    """

    contraction_weight: float | None = None  # initial W_L, None = auto
    attraction_weight: float = 1.0  # initial W_H
    amplification: float = 3.0  # W_L multiplier per iteration
    contraction_cap: float = 2048.0  # upper bound on W_L
    max_iterations: int = 20
    termination_ratio: float = 0.01  # stop below this bounding-volume ratio
    k_neighbors: int = 16
    lambda_trunk: float = 10.0

    def __post_init__(self) -> None:
        if self.contraction_weight is not None and self.contraction_weight < 0:
            raise InputError("contraction_weight must be >= 0")
        if self.attraction_weight <= 0 or self.contraction_cap < 0:
            raise InputError("attraction_weight must be > 0 and contraction_cap >= 0")
        if self.amplification <= 1:
            raise InputError("amplification must be > 1")
        if self.max_iterations < 1:
            raise InputError("max_iterations must be >= 1")
        if not 0 < self.termination_ratio < 1:
            raise InputError("termination_ratio must lie in (0, 1)")
        if self.k_neighbors < 3:
            raise InputError("k_neighbors must be >= 3")
        if self.lambda_trunk < 1:
            raise InputError("lambda_trunk must be >= 1")


@dataclass
class IterationStats:
    """One line of contraction diagnostics, handed to the progress callback."""

    iteration: int
    volume_ratio: float
    contraction_weight: float
    isolated_points: int


ProgressFn = Callable[[IterationStats], None]


def _knn_indices(positions: np.ndarray, k: int) -> np.ndarray:
    tree = cKDTree(positions)
    _, idx = tree.query(positions, k=k + 1)
    return idx


def _build_neighborhood_arrays(positions: np.ndarray, k: int) -> NeighborhoodGraph:
    n = len(positions)
    if k < 3:
        raise InputError(f"neighborhood size k must be >= 3, got {k}")
    if n <= k:
        raise InputError(f"need more than k={k} points, got {n}")

    idx = _knn_indices(positions, k)
    # batched PCA of each point+neighbor set for the tangent planes
    local = positions[idx]  # (n, k+1, 3)
    mean = local.mean(axis=1, keepdims=True)
    centered = local - mean
    svals, vts = np.linalg.svd(centered, full_matrices=False)[1:]

    triangles: list[np.ndarray] = []
    extra_edges: list[tuple[int, int]] = []
    for i in range(n):
        row = idx[i]
        nb = row[row != i][:k]
        if svals[i, 0] <= 0.0:
            continue  # all neighbors coincident: stays isolated
        if svals[i, 1] < 1e-9 * svals[i, 0]:
            _chain_fallback(positions, i, nb, extra_edges)
            continue
        loc = np.concatenate(([i], nb))
        pts2 = (positions[loc] - mean[i, 0]) @ vts[i, :2].T
        try:
            simplices = Delaunay(pts2).simplices
        except QhullError:
            _chain_fallback(positions, i, nb, extra_edges)
            continue
        fan = simplices[(simplices == 0).any(axis=1)]
        if len(fan):
            triangles.append(loc[fan])

    if triangles:
        tris = np.sort(np.vstack(triangles), axis=1)
        tris = np.unique(tris, axis=0)
    else:
        tris = np.zeros((0, 3), dtype=np.int64)

    pair_rows = [tris[:, [0, 1]], tris[:, [0, 2]], tris[:, [1, 2]]]
    if extra_edges:
        pair_rows.append(np.array(extra_edges, dtype=np.int64))
    pairs = np.vstack(pair_rows) if pair_rows else np.zeros((0, 2), dtype=np.int64)

    neighbors: list[np.ndarray] = [np.zeros(0, dtype=np.int64) for _ in range(n)]
    if len(pairs):
        sym = np.vstack([pairs, pairs[:, ::-1]])
        order = np.lexsort((sym[:, 1], sym[:, 0]))
        sym = sym[order]
        keep = np.ones(len(sym), dtype=bool)
        keep[1:] = (sym[1:] != sym[:-1]).any(axis=1)
        sym = sym[keep]
        starts = np.searchsorted(sym[:, 0], np.arange(n + 1))
        for i in range(n):
            neighbors[i] = sym[starts[i] : starts[i + 1], 1].copy()

    in_triangle = np.zeros(n, dtype=bool)
    if len(tris):
        in_triangle[tris.ravel()] = True
    isolated = np.flatnonzero(~in_triangle)
    return NeighborhoodGraph(neighbors, tris, isolated)


def _chain_fallback(
    positions: np.ndarray, i: int, nb: np.ndarray, edges: list[tuple[int, int]]
) -> None:
    """Near-1D neighborhood: link to the two nearest distinct neighbors."""
    dists = np.linalg.norm(positions[nb] - positions[i], axis=1)
    order = nb[np.argsort(dists, kind="stable")]
    picked = 0
    for j in order:
        if np.linalg.norm(positions[j] - positions[i]) > 0:
            edges.append((min(i, int(j)), max(i, int(j))))
            picked += 1
            if picked == 2:
                break


def build_neighborhoods(cloud: LabeledPointCloud, k: int) -> NeighborhoodGraph:
    """k-NN neighborhoods triangulated on per-point PCA tangent planes.

    Each point's k nearest neighbors are projected (together with the point)
    onto their principal plane, Delaunay-triangulated in 2D, and the triangle
    fan around the point is kept; fans are merged and deduplicated globally,
    adjacency is the symmetric union of all triangle and fallback edges.
    """
    return _build_neighborhood_arrays(cloud.positions, k)


def _one_ring_areas(positions: np.ndarray, triangles: np.ndarray, n: int) -> np.ndarray:
    areas = np.zeros(n)
    if len(triangles) == 0:
        return areas
    a = positions[triangles[:, 0]]
    b = positions[triangles[:, 1]]
    c = positions[triangles[:, 2]]
    tri_area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    for col in range(3):
        np.add.at(areas, triangles[:, col], tri_area)
    return areas


def _laplacian_matrix(positions: np.ndarray, triangles: np.ndarray, n: int) -> sparse.csr_matrix:
    if len(triangles) == 0:
        return sparse.csr_matrix((n, n))
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    pa, pb, pc = positions[a], positions[b], positions[c]

    def cot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        dots = np.einsum("ij,ij->i", u, v)
        flat = np.where(dots >= 0, _COT_MAX, -_COT_MAX)  # 0 or 180 degree slivers
        values = np.where(cross > 0, dots / np.where(cross > 0, cross, 1.0), flat)
        return np.clip(values, -_COT_MAX, _COT_MAX)

    cot_a = cot(pb - pa, pc - pa)  # angle at a, opposite edge (b, c)
    cot_b = cot(pa - pb, pc - pb)
    cot_c = cot(pa - pc, pb - pc)

    rows = np.concatenate([b, c, a, c, a, b])
    cols = np.concatenate([c, b, c, a, b, a])
    vals = 0.5 * np.concatenate([cot_a, cot_a, cot_b, cot_b, cot_c, cot_c])
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    lap = (off + sparse.diags(diag)).tocsr()
    lap.sort_indices()
    return lap


def build_cotangent_laplacian(
    cloud: LabeledPointCloud, neighborhood: NeighborhoodGraph
) -> SparseLaplacian:
    """Cotangent Laplacian over the neighborhood triangles.

    Off-diagonal entries are 1/2 (cot a + cot b) summed over the triangles
    sharing the edge, the diagonal is minus the row sum, so L @ 1 = 0.
    Cot values are clamped to the 1-degree range. Points without incident
    triangles get identically zero rows and are reported in ``isolated``.
    """
    n = len(cloud)
    matrix = _laplacian_matrix(cloud.positions, neighborhood.triangles, n)
    return SparseLaplacian(matrix, neighborhood.isolated.copy())


def _semantic_row_weights(
    labels: np.ndarray, matrix: sparse.csr_matrix, lambda_trunk: float
) -> np.ndarray:
    """Row weights of the semantic matrix: lambda_trunk for trunk rows whose
    Laplacian neighbors include no branch point, 1.0 otherwise."""
    n = matrix.shape[0]
    cols = matrix.indices
    rows = np.repeat(np.arange(n), np.diff(matrix.indptr))
    branch_col = (labels[cols] == SemanticLabel.BRANCH) & (rows != cols)
    has_branch_neighbor = np.zeros(n, dtype=bool)
    has_branch_neighbor[rows[branch_col]] = True
    trunk = labels == SemanticLabel.TRUNK
    return np.where(trunk & ~has_branch_neighbor, float(lambda_trunk), 1.0)


def build_semantic_weights(
    labels: np.ndarray, laplacian: SparseLaplacian | sparse.spmatrix, lambda_trunk: float
) -> SemanticWeights:
    """Materialize the semantic weight matrix for a given Laplacian.

    Labels other than trunk/branch behave like branch (weight 1): pass-through
    classes never receive the trunk amplification.
    """
    if lambda_trunk < 1:
        raise InputError("lambda_trunk must be >= 1")
    matrix = laplacian.matrix if isinstance(laplacian, SparseLaplacian) else laplacian.tocsr()
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1)
    if len(labels) != matrix.shape[0]:
        raise InputError(
            f"labels length {len(labels)} does not match Laplacian size {matrix.shape[0]}"
        )
    row_weights = _semantic_row_weights(labels, matrix, lambda_trunk)
    counts = np.diff(matrix.indptr)
    weighted = sparse.csr_matrix(
        (np.repeat(row_weights, counts), matrix.indices.copy(), matrix.indptr.copy()),
        shape=matrix.shape,
    ).tolil()
    weighted.setdiag(row_weights)
    return SemanticWeights(weighted.tocsr(), row_weights, float(lambda_trunk))


def _bounding_volume(positions: np.ndarray) -> float:
    if len(positions) >= 4:
        try:
            return float(ConvexHull(positions).volume)
        except QhullError:
            pass
    if len(positions) == 0:
        return 0.0
    extents = positions.max(axis=0) - positions.min(axis=0)
    return float(np.prod(extents))


def _contract(
    cloud: LabeledPointCloud,
    params: ContractionParams,
    semantic: bool,
    progress: ProgressFn | None,
) -> LabeledPointCloud:
    n = len(cloud)
    if n < 4:
        raise InputError(f"contraction needs at least 4 points, got {n}")
    positions = cloud.positions.copy()
    labels = cloud.labels

    nbhd = _build_neighborhood_arrays(positions, params.k_neighbors)
    lap = _laplacian_matrix(positions, nbhd.triangles, n)
    initial_areas = _one_ring_areas(positions, nbhd.triangles, n)
    ringed = initial_areas > 0

    if params.contraction_weight is not None:
        w_l = float(params.contraction_weight)
    else:
        if not ringed.any():
            raise InputError("cloud is too degenerate for contraction (no triangles)")
        w_l = 1.0 / (10.0 * np.sqrt(initial_areas[ringed].mean()))
    w_h = np.full(n, params.attraction_weight)

    initial_volume = max(_bounding_volume(positions), 1e-300)

    for iteration in range(1, params.max_iterations + 1):
        if __debug__ and lap.nnz:
            assert abs(lap - lap.T).max() < 1e-8, "Laplacian lost symmetry"
            assert np.abs(lap @ np.ones(n)).max() < 1e-8, "Laplacian row sums drifted"

        weighted_lap = lap.copy()
        weighted_lap.data = weighted_lap.data * w_l
        if semantic:
            row_scale = _semantic_row_weights(labels, lap, params.lambda_trunk)
            weighted_lap.data = weighted_lap.data * np.repeat(
                row_scale, np.diff(weighted_lap.indptr)
            )

        system = (weighted_lap.T @ weighted_lap) + sparse.diags(w_h**2)
        rhs = w_h[:, None] ** 2 * positions
        try:
            solution = splu(system.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise ContractionError(f"linear solve failed at iteration {iteration}: {exc}") from None
        if not np.isfinite(solution).all():
            raise ContractionError(f"linear solve produced non-finite values at iteration {iteration}")
        positions = solution

        volume_ratio = _bounding_volume(positions) / initial_volume
        if progress is not None:
            progress(IterationStats(iteration, volume_ratio, w_l, len(nbhd.isolated)))
        if volume_ratio < params.termination_ratio or iteration == params.max_iterations:
            break

        w_l = min(w_l * params.amplification, params.contraction_cap)
        nbhd = _build_neighborhood_arrays(positions, params.k_neighbors)
        lap = _laplacian_matrix(positions, nbhd.triangles, n)
        current_areas = _one_ring_areas(positions, nbhd.triangles, n)
        w_h = np.where(
            ringed,
            params.attraction_weight * initial_areas / np.maximum(current_areas, 1e-12),
            params.attraction_weight,
        )
        w_h = np.minimum(w_h, _ATTRACTION_CAP)

    return cloud.with_positions(positions)


def contract_lbc(
    cloud: LabeledPointCloud,
    params: ContractionParams | None = None,
    progress: ProgressFn | None = None,
) -> LabeledPointCloud:
    """Laplacian-based contraction; returns the moved points with their
    original colors and labels."""
    return _contract(cloud, params or ContractionParams(), semantic=False, progress=progress)


def contract_slbc(
    cloud: LabeledPointCloud,
    params: ContractionParams | None = None,
    progress: ProgressFn | None = None,
) -> LabeledPointCloud:
    """Semantically weighted contraction.

    Identical loop to ``contract_lbc`` except the Laplacian block is scaled
    row-wise by the semantic weights rebuilt each iteration from the fixed
    labels and the current sparsity pattern. Without trunk labels (or with
    lambda_trunk = 1) the result equals plain LBC bit for bit.
    """
    return _contract(cloud, params or ContractionParams(), semantic=True, progress=progress)
