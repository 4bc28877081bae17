"""Domain types shared by every pipeline stage."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from treeskel.errors import InputError

__all__ = [
    "SemanticLabel",
    "LabeledPointCloud",
    "CameraModel",
    "MarkerObservation",
    "SkeletonGraph",
]


class SemanticLabel(IntEnum):
    """Per-point class codes as stored in the PLY ``label`` property."""

    GROUND = 0
    TRUNK = 1
    BRANCH = 2
    SIGN = 3
    MARKER = 4
    CALIBRATION = 5
    ROOF = 6
    UNLABELED = 255

    @classmethod
    def from_code(cls, code: int) -> "SemanticLabel":
        """Map a raw byte code to a label; unknown codes become UNLABELED."""
        try:
            return cls(code)
        except ValueError:
            return cls.UNLABELED


_KNOWN_CODES = np.array([l.value for l in SemanticLabel], dtype=np.uint8)


def normalize_label_codes(codes: np.ndarray) -> np.ndarray:
    """Vector version of ``SemanticLabel.from_code`` for uint8 arrays."""
    codes = np.asarray(codes, dtype=np.uint8)
    known = np.isin(codes, _KNOWN_CODES)
    out = codes.copy()
    out[~known] = SemanticLabel.UNLABELED
    return out


@dataclass
class LabeledPointCloud:
    """N points with RGB colors in [0, 1] and a semantic label per point.

    positions are float64 in scene units (meters once the scale factor has
    been applied). All three arrays always have the same length.
    """

    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray  # (N, 3) float64 in [0, 1]
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self) -> None:
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        if self.colors is None:
            self.colors = np.zeros((n, 3))
        self.colors = np.ascontiguousarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if self.labels is None:
            self.labels = np.full(n, SemanticLabel.UNLABELED, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8).reshape(-1)
        self.validate()

    def __len__(self) -> int:
        return len(self.positions)

    def validate(self) -> None:
        n = len(self.positions)
        if len(self.colors) != n or len(self.labels) != n:
            raise InputError(
                f"cloud arrays disagree: {n} positions, "
                f"{len(self.colors)} colors, {len(self.labels)} labels"
            )
        if n and not np.isfinite(self.positions).all():
            raise InputError("cloud contains non-finite coordinates")
        if n and ((self.colors < 0).any() or (self.colors > 1).any()):
            raise InputError("cloud colors must lie in [0, 1]")

    def select(self, index: np.ndarray) -> "LabeledPointCloud":
        """New cloud with the rows picked by a boolean mask or index array."""
        return LabeledPointCloud(
            self.positions[index].copy(),
            self.colors[index].copy(),
            self.labels[index].copy(),
        )

    def with_positions(self, positions: np.ndarray) -> "LabeledPointCloud":
        """New cloud with replaced coordinates, keeping colors and labels."""
        return LabeledPointCloud(positions, self.colors.copy(), self.labels.copy())

    def copy(self) -> "LabeledPointCloud":
        return LabeledPointCloud(
            self.positions.copy(), self.colors.copy(), self.labels.copy()
        )

    @classmethod
    def empty(cls) -> "LabeledPointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.uint8))


_ROT_TOL = 1e-9


@dataclass
class CameraModel:
    """Shared pinhole intrinsics plus one camera-to-world pose per image.

    ``rotations[i]`` maps camera coordinates into world coordinates and
    ``origins[i]`` is the camera center in world coordinates, i.e. a ray
    through pixel direction d leaves from ``origins[i]`` along
    ``rotations[i] @ d``.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    image_ids: list[int]
    rotations: np.ndarray  # (M, 3, 3) camera-to-world
    origins: np.ndarray  # (M, 3) camera centers in world coordinates
    image_names: list[str] = field(default_factory=list)
    width: int = 0  # sensor size in pixels; 0 when the source did not say
    height: int = 0

    def __post_init__(self) -> None:
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 3, 3)
        self.origins = np.asarray(self.origins, dtype=np.float64).reshape(-1, 3)
        self.image_ids = list(self.image_ids)
        if not self.image_names:
            self.image_names = ["" for _ in self.image_ids]
        self._index = {img: i for i, img in enumerate(self.image_ids)}
        self.validate()

    def validate(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise InputError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (len(self.image_ids) == len(self.rotations) == len(self.origins)):
            raise InputError("camera pose arrays disagree in length")
        for img, R in zip(self.image_ids, self.rotations):
            if np.abs(R @ R.T - np.eye(3)).max() > _ROT_TOL:
                raise InputError(f"rotation for image {img} is not orthonormal")
            if abs(np.linalg.det(R) - 1.0) > _ROT_TOL:
                raise InputError(f"rotation for image {img} has det != +1")

    @property
    def intrinsic_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def has_pose(self, image_id: int) -> bool:
        return image_id in self._index

    def pose(self, image_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(camera-to-world rotation, camera origin) for one image."""
        try:
            i = self._index[image_id]
        except KeyError:
            raise InputError(f"no pose for image id {image_id}") from None
        return self.rotations[i], self.origins[i]

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "CameraModel":
        """Apply the world-frame rigid motion p -> rotation @ p + translation."""
        return CameraModel(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            list(self.image_ids),
            np.einsum("ij,mjk->mik", rotation, self.rotations),
            self.origins @ rotation.T + translation,
            list(self.image_names),
            self.width,
            self.height,
        )

    def scaled(self, s: float) -> "CameraModel":
        """Scale camera origins by s; rotations are unaffected."""
        return CameraModel(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            list(self.image_ids),
            self.rotations.copy(),
            self.origins * s,
            list(self.image_names),
            self.width,
            self.height,
        )


@dataclass
class MarkerObservation:
    """Four fiducial corner pixels in one image, in consistent cyclic order."""

    image_id: int
    corners: np.ndarray  # (4, 2) pixel coordinates c1..c4

    def __post_init__(self) -> None:
        self.corners = np.asarray(self.corners, dtype=np.float64).reshape(4, 2)
        self.validate()

    def validate(self) -> None:
        for a in range(4):
            for b in range(a + 1, 4):
                if np.array_equal(self.corners[a], self.corners[b]):
                    raise InputError(
                        f"marker observation for image {self.image_id}: "
                        f"corners {a + 1} and {b + 1} coincide"
                    )
        x, y = self.corners[:, 0], self.corners[:, 1]
        area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        if area <= 0.0:
            raise InputError(
                f"marker observation for image {self.image_id}: degenerate quad (zero area)"
            )


@dataclass
class SkeletonGraph:
    """Undirected graph over 3D nodes; edge endpoints index into ``nodes``."""

    nodes: np.ndarray  # (V, 3)
    edges: np.ndarray  # (E, 2) int, stored with i < j

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=np.float64).reshape(-1, 3)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            edges = np.sort(edges, axis=1)
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
        self.edges = edges
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= len(self.nodes):
                raise InputError("graph edge endpoint out of range")
            if (self.edges[:, 0] == self.edges[:, 1]).any():
                raise InputError("graph contains a self-loop")

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(len(self.nodes), dtype=np.int64)
        if len(self.edges):
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(len(self.nodes))]
        for i, j in self.edges:
            adj[i].append(int(j))
            adj[j].append(int(i))
        return adj

    def is_tree(self) -> bool:
        """Connected and acyclic (single node counts; empty graph does not)."""
        v = len(self.nodes)
        if v == 0 or len(self.edges) != v - 1:
            return False
        # |E| = |V|-1, so connectivity already implies there is no cycle.
        seen = np.zeros(v, dtype=bool)
        stack = [0]
        seen[0] = True
        adj = self.adjacency()
        while stack:
            cur = stack.pop()
            for nxt in adj[cur]:
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append(nxt)
        return bool(seen.all())
