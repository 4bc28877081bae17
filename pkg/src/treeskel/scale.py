"""Metric scale recovery from multi-view observations of one square fiducial.

A monocular reconstruction is defined up to scale. Observing a square
marker of known side length from at least two posed images pins it down:
each detected corner pixel casts a world-space ray, each corner's ray
bundle is intersected in the least-squares sense, and the ratio between
the known side length and the mean reconstructed side length is the
meters-per-scene-unit factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from treeskel.errors import DegenerateGeometryError, InputError
from treeskel.core_io import CameraModel, LabeledPointCloud, MarkerObservation

__all__ = [
    "Ray",
    "ScaleEstimate",
    "pixel_to_ray",
    "intersect_rays_least_squares",
    "estimate_scale",
    "apply_scale",
]

_SINGULAR_RTOL = 1e-10

MIN_MARKER_IMAGES = 2


@dataclass
class Ray:
    """World-space line origin + lambda * direction with unit direction."""

    origin: np.ndarray  # (3,)
    direction: np.ndarray  # (3,) unit

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if not np.isfinite(self.origin).all():
            raise InputError("ray origin is not finite")
        norm = np.linalg.norm(self.direction)
        if abs(norm - 1.0) > 1e-12:
            raise InputError(f"ray direction must be unit length, |u| = {norm!r}")


@dataclass
class ScaleEstimate:
    scale: float  # meters per scene unit
    corners: np.ndarray  # (4, 3) marker corners in scene units
    mean_side_scene: float
    residuals: np.ndarray  # (4,) RMS point-to-line distance per corner

    def __post_init__(self) -> None:
        if self.scale <= 0 or self.mean_side_scene <= 0:
            raise InputError("scale and mean side length must be positive")


def pixel_to_ray(camera: CameraModel, image_id: int, pixel) -> Ray:
    """Back-project one pixel into a world-space ray.

    Direction is R_j @ normalize(K^-1 (u, v, 1)) with R_j the camera-to-world
    rotation; the origin is the camera center.
    """
    pixel = np.asarray(pixel, dtype=np.float64).reshape(2)
    if not np.isfinite(pixel).all():
        raise InputError("pixel coordinates must be finite")
    R, origin = camera.pose(image_id)
    d_cam = np.array(
        [
            (pixel[0] - camera.cx) / camera.fx,
            (pixel[1] - camera.cy) / camera.fy,
            1.0,
        ]
    )
    d_world = R @ (d_cam / np.linalg.norm(d_cam))
    # rotation preserves length up to rounding; renormalize to the 1e-12 contract
    return Ray(origin, d_world / np.linalg.norm(d_world))


def intersect_rays_least_squares(rays: list[Ray]) -> tuple[np.ndarray, float]:
    """Point minimizing the sum of squared orthogonal distances to the rays.

    Solves the normal equations sum(I - u u^T) x = sum(I - u u^T) t in
    closed form; the residual reported is the RMS of the per-ray orthogonal
    distances at the solution. Raises DegenerateGeometryError when the
    system is singular (all rays parallel).
    """
    if len(rays) < 2:
        raise InputError(f"ray intersection needs at least 2 rays, got {len(rays)}")
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for ray in rays:
        P = np.eye(3) - np.outer(ray.direction, ray.direction)
        A += P
        b += P @ ray.origin

    eigvals = np.linalg.eigvalsh(A)
    if eigvals[0] < _SINGULAR_RTOL * max(eigvals[-1], 1e-300):
        raise DegenerateGeometryError(
            "ray bundle is degenerate (all rays parallel); no unique intersection"
        )
    x = np.linalg.solve(A, b)

    sq_dists = []
    for ray in rays:
        w = ray.origin - x
        sq_dists.append(w @ w - (w @ ray.direction) ** 2)
    residual = float(np.sqrt(max(np.mean(sq_dists), 0.0)))
    return x, residual


def estimate_scale(
    observations: list[MarkerObservation], camera: CameraModel, d_aruco: float
) -> ScaleEstimate:
    """Estimate meters-per-scene-unit from marker detections.

    Needs the marker seen in at least two posed images. Detections whose
    image id has no pose cannot cast rays and are skipped. The four corner
    points are triangulated independently; the scale is d_aruco divided by
    the mean of the four neighboring-corner distances.
    """
    if d_aruco <= 0:
        raise InputError(f"marker side length must be positive, got {d_aruco}")
    usable = [obs for obs in observations if camera.has_pose(obs.image_id)]
    if len(usable) < MIN_MARKER_IMAGES:
        raise InputError(
            f"scale estimation needs the marker in at least {MIN_MARKER_IMAGES} posed "
            f"images, got {len(usable)}"
        )

    corners = np.zeros((4, 3))
    residuals = np.zeros(4)
    for k in range(4):
        rays = [pixel_to_ray(camera, obs.image_id, obs.corners[k]) for obs in usable]
        try:
            corners[k], residuals[k] = intersect_rays_least_squares(rays)
        except DegenerateGeometryError as exc:
            raise DegenerateGeometryError(f"corner {k + 1}: {exc}") from None

    sides = [np.linalg.norm(corners[k] - corners[(k + 1) % 4]) for k in range(4)]
    mean_side = float(np.mean(sides))
    if mean_side <= 0:
        raise DegenerateGeometryError("triangulated marker corners coincide")
    return ScaleEstimate(d_aruco / mean_side, corners, mean_side, residuals)


def apply_scale(
    cloud: LabeledPointCloud, camera: CameraModel | None, s: float
) -> tuple[LabeledPointCloud, CameraModel | None]:
    """Scale point positions and camera origins by s; rotations unchanged."""
    if s <= 0:
        raise InputError(f"scale factor must be positive, got {s}")
    scaled_cloud = cloud.with_positions(cloud.positions * s)
    scaled_camera = camera.scaled(s) if camera is not None else None
    return scaled_cloud, scaled_camera
