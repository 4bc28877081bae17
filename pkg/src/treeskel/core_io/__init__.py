"""Shared domain types and file formats (PLY, COLMAP text, markers, graphs).

All readers and writers are pure functions over paths: no shared mutable
state, safe to call concurrently on distinct files.
"""

from treeskel.core_io.types import (
    CameraModel,
    LabeledPointCloud,
    MarkerObservation,
    SemanticLabel,
    SkeletonGraph,
    normalize_label_codes,
)
from treeskel.core_io.ply import read_ply, write_ply
from treeskel.core_io.colmap import read_colmap_model, write_colmap_model
from treeskel.core_io.markers import read_marker_detections, write_marker_detections
from treeskel.core_io.graphs import GRAPH_FORMATS, read_graph, write_graph

__all__ = [
    "CameraModel",
    "LabeledPointCloud",
    "MarkerObservation",
    "SemanticLabel",
    "SkeletonGraph",
    "normalize_label_codes",
    "read_ply",
    "write_ply",
    "read_colmap_model",
    "write_colmap_model",
    "read_marker_detections",
    "write_marker_detections",
    "GRAPH_FORMATS",
    "read_graph",
    "write_graph",
]
