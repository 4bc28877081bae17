"""Fiducial marker detection records.

One record per line: an image id followed by eight numbers, the pixel
coordinates u1 v1 ... u4 v4 of the four marker corners in cyclic order.
Fields may be separated by whitespace and/or commas; ``#`` starts a comment.
"""

from __future__ import annotations

from pathlib import Path

from treeskel.errors import InputError, ParseError
from treeskel.core_io.types import MarkerObservation

__all__ = ["read_marker_detections", "write_marker_detections"]


def read_marker_detections(path: str | Path) -> list[MarkerObservation]:
    path = Path(path)
    observations = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.replace(",", " ").split()
        if len(fields) != 9:
            raise ParseError(
                f"{path}: line {lineno}: expected image id + 8 corner values, "
                f"found {len(fields)} fields"
            )
        try:
            image_id = int(fields[0])
            values = [float(v) for v in fields[1:]]
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-numeric field in {line!r}") from None
        corners = [[values[2 * k], values[2 * k + 1]] for k in range(4)]
        try:
            observations.append(MarkerObservation(image_id, corners))
        except InputError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return observations


def write_marker_detections(observations: list[MarkerObservation], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("# image_id u1 v1 u2 v2 u3 v3 u4 v4\n")
        for obs in observations:
            coords = " ".join(repr(float(v)) for v in obs.corners.ravel())
            fh.write(f"{obs.image_id} {coords}\n")
