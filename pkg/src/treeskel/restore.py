"""Point cloud restoration: ground alignment, ROI crop and denoising.

Order of battle for a raw photogrammetric scene: fit the ground plane
(RANSAC), rotate/translate the scene so the ground is the z = 0 plane,
crop to the camera footprint, drop statistical outliers, then remove
sky-colored silhouette points that multi-view stereo fused into thin
branches. Every step is a pure function: inputs are never mutated, the
rng seed fully determines the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.cluster import DBSCAN

from treeskel.errors import DegenerateGeometryError, InputError, ParseError
from treeskel.core_io import CameraModel, LabeledPointCloud

__all__ = [
    "GroundPlane",
    "RestoreParams",
    "fit_ground_plane",
    "align_to_ground",
    "crop_roi",
    "statistical_outlier_removal",
    "remove_sky_silhouette",
    "read_sky_samples",
]


@dataclass
class GroundPlane:
    """Plane n.p + d = 0 with unit normal, plus the supporting inliers."""

    normal: np.ndarray  # (3,) unit vector
    offset: float
    inliers: np.ndarray  # indices into the cloud it was fit on

    def __post_init__(self) -> None:
        self.normal = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(self.normal)
        if abs(norm - 1.0) > 1e-9:
            raise InputError(f"plane normal must be unit length, got |n| = {norm}")

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.offset)


@dataclass
class RestoreParams:
    """Knobs for the restoration steps.

    ransac_threshold = None picks 0.01 x the bounding-box diagonal of the
    cloud being fit, which survives the unknown pre-scale units of a
    monocular reconstruction.
    """

    ransac_threshold: float | None = None
    ransac_iterations: int = 1000
    sor_k: int = 20
    sor_std_ratio: float = 2.0
    dbscan_eps: float = 0.03
    dbscan_min_pts: int = 10
    sky_color_tolerance: float = 0.08
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ransac_iterations < 1 or self.sor_k < 1 or self.dbscan_min_pts < 1:
            raise InputError("restore counts must be >= 1")
        if self.ransac_threshold is not None and self.ransac_threshold <= 0:
            raise InputError("ransac_threshold must be positive")
        if self.sor_std_ratio <= 0 or self.dbscan_eps <= 0:
            raise InputError("restore thresholds must be positive")
        if self.sky_color_tolerance < 0:
            raise InputError("sky_color_tolerance must be >= 0")


def _resolve_threshold(points: np.ndarray, params: RestoreParams) -> float:
    if params.ransac_threshold is not None:
        return params.ransac_threshold
    diagonal = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
    if diagonal == 0.0:
        raise DegenerateGeometryError("cloud has zero extent; cannot derive RANSAC threshold")
    return 0.01 * diagonal


def fit_ground_plane(cloud: LabeledPointCloud, params: RestoreParams) -> GroundPlane:
    """RANSAC plane fit followed by a least-squares refinement on the inliers.

    The returned normal points toward the side holding the majority of the
    cloud (the tree stands on the ground, so "up" wins).
    """
    points = cloud.positions
    n = len(points)
    if n < 3:
        raise InputError(f"plane fit needs at least 3 points, got {n}")
    threshold = _resolve_threshold(points, params)
    rng = np.random.default_rng(params.seed)

    best_count = 0
    best_inliers: np.ndarray | None = None
    for _ in range(params.ransac_iterations):
        i, j, k = rng.choice(n, size=3, replace=False)
        v1 = points[j] - points[i]
        v2 = points[k] - points[i]
        normal = np.cross(v1, v2)
        norm = np.linalg.norm(normal)
        if norm < 1e-12 * max(np.linalg.norm(v1), np.linalg.norm(v2), 1e-300):
            continue  # collinear sample
        normal = normal / norm
        d = -normal @ points[i]
        inlier_mask = np.abs(points @ normal + d) <= threshold
        count = int(inlier_mask.sum())
        if count > best_count:
            best_count = count
            best_inliers = np.flatnonzero(inlier_mask)

    if best_inliers is None:
        raise DegenerateGeometryError(
            "all RANSAC hypotheses were degenerate (collinear samples)"
        )

    # least-squares refit: plane through the inlier centroid whose normal is
    # the smallest-eigenvalue direction of the inlier covariance
    inlier_pts = points[best_inliers]
    centroid = inlier_pts.mean(axis=0)
    centered = inlier_pts - centroid
    _, vecs = np.linalg.eigh(centered.T @ centered)
    normal = vecs[:, 0]
    normal = normal / np.linalg.norm(normal)
    d = float(-normal @ centroid)

    signed = points @ normal + d
    if (signed > 0).sum() < (signed < 0).sum():
        normal, d = -normal, -d
        signed = -signed
    inliers = np.flatnonzero(np.abs(signed) <= threshold)
    return GroundPlane(normal, d, inliers)


def _rotation_to_z(normal: np.ndarray) -> np.ndarray:
    """Rodrigues rotation taking the unit vector ``normal`` onto (0,0,1)."""
    z = np.array([0.0, 0.0, 1.0])
    axis = np.cross(normal, z)
    s = np.linalg.norm(axis)
    c = float(normal @ z)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        return np.diag([1.0, -1.0, -1.0])  # opposite normal: 180 deg about x
    axis = axis / s
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    theta = np.arctan2(s, c)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def align_to_ground(
    cloud: LabeledPointCloud,
    cameras: CameraModel | None,
    plane: GroundPlane,
) -> tuple[LabeledPointCloud, CameraModel | None]:
    """Rigidly move the scene so the ground plane becomes z = 0, normal up.

    If the center of mass ends up below the plane the scene is flipped 180
    degrees about the x-axis so the tree grows in +z. Camera origins and
    rotations receive the same rigid motion.
    """
    R = _rotation_to_z(plane.normal)
    t = np.array([0.0, 0.0, plane.offset])

    moved = cloud.positions @ R.T + t
    if len(moved) and moved[:, 2].mean() < 0:
        flip = np.diag([1.0, -1.0, -1.0])
        R = flip @ R
        t = flip @ t
        moved = cloud.positions @ R.T + t

    new_cloud = cloud.with_positions(moved)
    new_cameras = cameras.transformed(R, t) if cameras is not None else None
    return new_cloud, new_cameras


def crop_roi(cloud: LabeledPointCloud, cameras: CameraModel) -> LabeledPointCloud:
    """Keep points whose (x, y) fall inside the camera-origin bounding box.

    The box is closed, z is unrestricted: the cameras stand around the tree,
    so their footprint bounds it laterally but says nothing about height.
    """
    if cameras is None or len(cameras.origins) == 0:
        raise InputError("crop_roi needs at least one camera origin")
    lo = cameras.origins[:, :2].min(axis=0)
    hi = cameras.origins[:, :2].max(axis=0)
    xy = cloud.positions[:, :2]
    mask = (xy >= lo).all(axis=1) & (xy <= hi).all(axis=1)
    return cloud.select(mask)


def statistical_outlier_removal(
    cloud: LabeledPointCloud, sor_k: int, sor_std_ratio: float
) -> LabeledPointCloud:
    """Drop points whose mean k-NN distance exceeds mu + ratio * sigma."""
    n = len(cloud)
    if n <= sor_k:
        raise InputError(f"statistical filter needs more than sor_k={sor_k} points, got {n}")
    tree = cKDTree(cloud.positions)
    dists, _ = tree.query(cloud.positions, k=sor_k + 1)
    mean_dists = dists[:, 1:].mean(axis=1)  # column 0 is the point itself
    cutoff = mean_dists.mean() + sor_std_ratio * mean_dists.std()
    return cloud.select(mean_dists <= cutoff)


def remove_sky_silhouette(
    cloud: LabeledPointCloud, sky_samples: np.ndarray, params: RestoreParams
) -> LabeledPointCloud:
    """Remove points colored like the sky.

    The sample colors are jittered with N(0, 1/256) noise to undo the 8-bit
    quantization, clustered with DBSCAN in RGB space, and every cloud point
    within ``sky_color_tolerance`` (Euclidean RGB) of a cluster centroid is
    dropped. No clusters (samples too sparse for min_pts) means no-op.
    """
    sky_samples = np.asarray(sky_samples, dtype=np.float64).reshape(-1, 3)
    if len(sky_samples) == 0:
        raise InputError("sky sample set is empty")

    rng = np.random.default_rng(params.seed)
    jittered = sky_samples + rng.normal(0.0, 1.0 / 256.0, size=sky_samples.shape)
    labels = DBSCAN(eps=params.dbscan_eps, min_samples=params.dbscan_min_pts).fit_predict(
        jittered
    )
    cluster_ids = np.unique(labels[labels >= 0])
    if len(cluster_ids) == 0 or len(cloud) == 0:
        return cloud.copy()

    centroids = np.stack([jittered[labels == c].mean(axis=0) for c in cluster_ids])
    dist_to_sky = np.min(
        np.linalg.norm(cloud.colors[:, None, :] - centroids[None, :, :], axis=2), axis=1
    )
    return cloud.select(dist_to_sky > params.sky_color_tolerance)


def read_sky_samples(path) -> np.ndarray:
    """Read `r g b` triples in [0, 1], one per line; ``#`` starts a comment."""
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.replace(",", " ").split()
            if len(fields) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 values, got {len(fields)}")
            try:
                rgb = [float(v) for v in fields]
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric color value") from None
            if min(rgb) < 0 or max(rgb) > 1:
                raise ParseError(f"{path}: line {lineno}: color out of [0, 1]: {rgb}")
            samples.append(rgb)
    return np.array(samples, dtype=np.float64).reshape(-1, 3)
