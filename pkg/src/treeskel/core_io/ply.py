"""PLY point-cloud reader/writer.

Supports ASCII and binary_little_endian 1.0 vertex clouds. On write, the
vertex layout is x,y,z float32, red,green,blue uint8 and label uint8. On
read, any extra scalar properties (e.g. normals from a dense MVS export)
are parsed and discarded, so third-party clouds load without conversion.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from treeskel.errors import InputError, ParseError
from treeskel.core_io.types import LabeledPointCloud, SemanticLabel, normalize_label_codes

__all__ = ["read_ply", "write_ply"]

_SCALAR_TYPES = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}

_FLOAT_NAMES = {"float", "float32", "double", "float64"}
_BYTE_NAMES = {"uchar", "uint8"}


def _parse_header(raw: bytes, path: Path):
    """Split out the header; returns (fmt, count, properties, body_offset, lines)."""
    end = raw.find(b"end_header")
    if end < 0:
        raise ParseError(f"{path}: no end_header found in the first {len(raw)} bytes")
    nl = raw.find(b"\n", end)
    if nl < 0:
        raise ParseError(f"{path}: end_header line is not terminated")
    body_offset = nl + 1
    header_lines = raw[:body_offset].decode("ascii", errors="replace").splitlines()

    if not header_lines or header_lines[0].strip() != "ply":
        raise ParseError(f"{path}: line 1: missing 'ply' magic")

    fmt = None
    vertex_count = None
    properties: list[tuple[str, str]] = []  # (name, ply type)
    in_vertex = False
    for lineno, line in enumerate(header_lines[1:], start=2):
        fields = line.strip().split()
        if not fields or fields[0] == "comment":
            continue
        if fields[0] == "format":
            if len(fields) != 3 or fields[2] != "1.0":
                raise ParseError(f"{path}: line {lineno}: malformed format line {line!r}")
            if fields[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(
                    f"{path}: line {lineno}: unsupported format {fields[1]!r} "
                    "(expected ascii or binary_little_endian)"
                )
            fmt = fields[1]
        elif fields[0] == "element":
            if len(fields) != 3:
                raise ParseError(f"{path}: line {lineno}: malformed element line {line!r}")
            if fields[1] != "vertex":
                raise ParseError(
                    f"{path}: line {lineno}: unsupported element {fields[1]!r} "
                    "(only vertex clouds are handled)"
                )
            try:
                vertex_count = int(fields[2])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: bad vertex count {fields[2]!r}") from None
            if vertex_count < 0:
                raise ParseError(f"{path}: line {lineno}: negative vertex count")
            in_vertex = True
        elif fields[0] == "property":
            if not in_vertex:
                raise ParseError(f"{path}: line {lineno}: property before any element")
            if len(fields) >= 2 and fields[1] == "list":
                raise ParseError(f"{path}: line {lineno}: list properties are unsupported")
            if len(fields) != 3:
                raise ParseError(f"{path}: line {lineno}: malformed property line {line!r}")
            ptype, pname = fields[1], fields[2]
            if ptype not in _SCALAR_TYPES:
                raise ParseError(f"{path}: line {lineno}: unsupported property type {ptype!r}")
            if pname in ("x", "y", "z") and ptype not in _FLOAT_NAMES:
                raise ParseError(
                    f"{path}: line {lineno}: coordinate {pname!r} must be float, got {ptype!r}"
                )
            if pname in ("red", "green", "blue", "label") and ptype not in _BYTE_NAMES:
                raise ParseError(
                    f"{path}: line {lineno}: property {pname!r} must be uchar, got {ptype!r}"
                )
            properties.append((pname, ptype))
        elif fields[0] == "end_header":
            break
        else:
            raise ParseError(f"{path}: line {lineno}: unrecognized header line {line!r}")

    if fmt is None:
        raise ParseError(f"{path}: header has no format line")
    if vertex_count is None:
        raise ParseError(f"{path}: header declares no vertex element")
    names = [n for n, _ in properties]
    for coord in ("x", "y", "z"):
        if coord not in names:
            raise ParseError(f"{path}: header misses vertex property {coord!r}")
    if len(set(names)) != len(names):
        raise ParseError(f"{path}: duplicate vertex property names")
    return fmt, vertex_count, properties, body_offset, len(header_lines)


def read_ply(path: str | Path) -> LabeledPointCloud:
    """Read a PLY vertex cloud.

    Missing color properties default to black, a missing label property to
    UNLABELED; unknown label codes are mapped to UNLABELED as well.
    """
    path = Path(path)
    raw = path.read_bytes()
    fmt, count, properties, body_offset, header_lines = _parse_header(raw, path)

    dtype = np.dtype([(name, "<" + _SCALAR_TYPES[t]) for name, t in properties])
    if fmt == "binary_little_endian":
        body = raw[body_offset:]
        expected = dtype.itemsize * count
        if len(body) < expected:
            raise ParseError(
                f"{path}: byte {body_offset + len(body)}: vertex data ends early "
                f"(expected {expected} bytes for {count} vertices, found {len(body)})"
            )
        data = np.frombuffer(body[:expected], dtype=dtype)
    else:
        text = raw[body_offset:].decode("ascii", errors="replace")
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if len(rows) != count:
            raise ParseError(
                f"{path}: line {header_lines + len(rows) + 1}: expected {count} "
                f"vertex lines, found {len(rows)}"
            )
        data = np.zeros(count, dtype=dtype)
        width = len(properties)
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ParseError(
                    f"{path}: line {header_lines + i + 1}: expected {width} values, "
                    f"found {len(row)}"
                )
            try:
                for (name, _), tok in zip(properties, row):
                    data[name][i] = float(tok)
            except ValueError:
                raise ParseError(
                    f"{path}: line {header_lines + i + 1}: non-numeric value in {row!r}"
                ) from None

    positions = np.column_stack([data["x"], data["y"], data["z"]]).astype(np.float64)
    names = {n for n, _ in properties}
    if {"red", "green", "blue"} <= names:
        colors = np.column_stack([data["red"], data["green"], data["blue"]]) / 255.0
    else:
        colors = np.zeros((count, 3))
    if "label" in names:
        labels = normalize_label_codes(data["label"])
    else:
        labels = np.full(count, SemanticLabel.UNLABELED, dtype=np.uint8)
    try:
        return LabeledPointCloud(positions, colors, labels)
    except InputError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_ply(
    cloud: LabeledPointCloud, path: str | Path, format: str = "binary_little_endian"
) -> None:
    """Write a cloud; ``format`` is 'binary_little_endian' or 'ascii'.

    Positions are stored as float32: binary round-trips bit-exactly, ASCII
    is printed with 9 significant digits which also recovers the float32
    values exactly.
    """
    if format not in ("binary_little_endian", "ascii"):
        raise InputError(f"unsupported PLY format {format!r}")
    cloud.validate()
    path = Path(path)

    n = len(cloud)
    header = "\n".join(
        [
            "ply",
            f"format {format} 1.0",
            f"element vertex {n}",
            "property float x",
            "property float y",
            "property float z",
            "property uchar red",
            "property uchar green",
            "property uchar blue",
            "property uchar label",
            "end_header",
        ]
    )

    xyz = cloud.positions.astype(np.float32)
    rgb = np.clip(np.rint(cloud.colors * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        if format == "binary_little_endian":
            rec = np.zeros(
                n,
                dtype=[
                    ("x", "<f4"),
                    ("y", "<f4"),
                    ("z", "<f4"),
                    ("red", "u1"),
                    ("green", "u1"),
                    ("blue", "u1"),
                    ("label", "u1"),
                ],
            )
            rec["x"], rec["y"], rec["z"] = xyz[:, 0], xyz[:, 1], xyz[:, 2]
            rec["red"], rec["green"], rec["blue"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
            rec["label"] = cloud.labels
            fh.write(rec.tobytes())
        else:
            lines = [
                "%.9g %.9g %.9g %d %d %d %d"
                % (x, y, z, r, g, b, lab)
                for (x, y, z), (r, g, b), lab in zip(xyz, rgb, cloud.labels)
            ]
            if lines:
                fh.write(("\n".join(lines) + "\n").encode("ascii"))
