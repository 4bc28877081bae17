"""Reader/writer for sparse SfM models in the COLMAP text format.

cameras.txt stores ``CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]`` and images.txt
two lines per image: ``IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME``
followed by the 2D feature list (which we skip). The file encodes the
world-to-camera map x_cam = R x_world + t; we convert to the camera-to-world
convention used throughout this package (rotation R^T, origin -R^T t).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from treeskel.errors import ParseError
from treeskel.core_io.types import CameraModel

__all__ = ["read_colmap_model", "write_colmap_model"]

_QUAT_NORM_TOL = 1e-6


def _quat_to_rotation(qw: float, qx: float, qy: float, qz: float) -> np.ndarray:
    return np.array(
        [
            [
                1 - 2 * qy * qy - 2 * qz * qz,
                2 * qx * qy - 2 * qw * qz,
                2 * qz * qx + 2 * qw * qy,
            ],
            [
                2 * qx * qy + 2 * qw * qz,
                1 - 2 * qx * qx - 2 * qz * qz,
                2 * qy * qz - 2 * qw * qx,
            ],
            [
                2 * qz * qx - 2 * qw * qy,
                2 * qy * qz + 2 * qw * qx,
                1 - 2 * qx * qx - 2 * qy * qy,
            ],
        ]
    )


def _rotation_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix -> (qw, qx, qy, qz) via the symmetric eigenproblem."""
    rxx, ryx, rzx, rxy, ryy, rzy, rxz, ryz, rzz = R.flat
    K = (
        np.array(
            [
                [rxx - ryy - rzz, 0, 0, 0],
                [ryx + rxy, ryy - rxx - rzz, 0, 0],
                [rzx + rxz, rzy + ryz, rzz - rxx - ryy, 0],
                [ryz - rzy, rzx - rxz, rxy - ryx, rxx + ryy + rzz],
            ]
        )
        / 3.0
    )
    vals, vecs = np.linalg.eigh(K)
    q = vecs[[3, 0, 1, 2], np.argmax(vals)]
    if q[0] < 0:
        q = -q
    return q


def _read_cameras(path: Path) -> dict[int, tuple[float, float, float, float, int, int]]:
    cameras = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 4:
            raise ParseError(f"{path}: line {lineno}: malformed camera line {line!r}")
        try:
            cam_id = int(fields[0])
            width, height = int(fields[2]), int(fields[3])
            params = [float(v) for v in fields[4:]]
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-numeric camera field") from None
        model = fields[1]
        if model == "PINHOLE":
            if len(params) != 4:
                raise ParseError(f"{path}: line {lineno}: PINHOLE needs 4 params")
            fx, fy, cx, cy = params
        elif model == "SIMPLE_PINHOLE":
            if len(params) != 3:
                raise ParseError(f"{path}: line {lineno}: SIMPLE_PINHOLE needs 3 params")
            f, cx, cy = params
            fx = fy = f
        else:
            raise ParseError(
                f"{path}: line {lineno}: unsupported camera model {model!r} "
                "(only PINHOLE and SIMPLE_PINHOLE)"
            )
        cameras[cam_id] = (fx, fy, cx, cy, width, height)
    if not cameras:
        raise ParseError(f"{path}: no cameras found")
    return cameras


def read_colmap_model(model_dir: str | Path) -> CameraModel:
    """Load cameras.txt + images.txt from a COLMAP text model directory.

    All images must share one set of pinhole intrinsics. Poses are returned
    camera-to-world (see module docstring for the convention math).
    """
    model_dir = Path(model_dir)
    cameras_path = model_dir / "cameras.txt"
    images_path = model_dir / "images.txt"
    for p in (cameras_path, images_path):
        if not p.is_file():
            raise ParseError(f"{p}: file not found")

    cameras = _read_cameras(cameras_path)

    image_ids: list[int] = []
    names: list[str] = []
    rotations: list[np.ndarray] = []
    origins: list[np.ndarray] = []
    used_cam_ids: set[int] = set()

    lines = images_path.read_text().splitlines()
    i = 0
    lineno = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        lineno += 1
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 10:
            raise ParseError(f"{images_path}: line {lineno}: malformed image line {line!r}")
        try:
            image_id = int(fields[0])
            qw, qx, qy, qz = (float(v) for v in fields[1:5])
            tx, ty, tz = (float(v) for v in fields[5:8])
            cam_id = int(fields[8])
        except ValueError:
            raise ParseError(f"{images_path}: line {lineno}: non-numeric pose field") from None
        name = fields[9]
        if cam_id not in cameras:
            raise ParseError(f"{images_path}: line {lineno}: unknown camera id {cam_id}")

        norm = np.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
        if abs(norm - 1.0) > _QUAT_NORM_TOL:
            raise ParseError(
                f"{images_path}: line {lineno}: quaternion norm {norm:.9f} "
                f"deviates from 1 by more than {_QUAT_NORM_TOL:g}"
            )
        R_w2c = _quat_to_rotation(qw / norm, qx / norm, qy / norm, qz / norm)
        t = np.array([tx, ty, tz])
        rotations.append(R_w2c.T)
        origins.append(-R_w2c.T @ t)
        image_ids.append(image_id)
        names.append(name)
        used_cam_ids.add(cam_id)

        # the mandatory POINTS2D line (may be empty); skipped
        i += 1
        lineno += 1

    if not image_ids:
        raise ParseError(f"{images_path}: no image poses found")

    intrinsics = {cameras[c] for c in used_cam_ids}
    if len(intrinsics) > 1:
        raise ParseError(
            f"{images_path}: images reference {len(intrinsics)} distinct intrinsics; "
            "a single shared pinhole camera is required"
        )
    fx, fy, cx, cy, width, height = next(iter(intrinsics))
    return CameraModel(
        fx,
        fy,
        cx,
        cy,
        image_ids,
        np.stack(rotations),
        np.stack(origins),
        names,
        width,
        height,
    )


def write_colmap_model(camera: CameraModel, model_dir: str | Path) -> None:
    """Write cameras.txt + images.txt, the inverse of ``read_colmap_model``."""
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)

    width = camera.width or int(round(2 * camera.cx))
    height = camera.height or int(round(2 * camera.cy))
    with open(model_dir / "cameras.txt", "w") as fh:
        fh.write("# Camera list with one line of data per camera:\n")
        fh.write("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n")
        fh.write(
            f"1 PINHOLE {width} {height} "
            f"{camera.fx!r} {camera.fy!r} {camera.cx!r} {camera.cy!r}\n"
        )

    with open(model_dir / "images.txt", "w") as fh:
        fh.write("# Image list with two lines of data per image:\n")
        fh.write("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n")
        fh.write("#   POINTS2D[] as (X, Y, POINT3D_ID)\n")
        for image_id, name, R_c2w, origin in zip(
            camera.image_ids, camera.image_names, camera.rotations, camera.origins
        ):
            R_w2c = R_c2w.T
            t = -R_w2c @ origin
            qw, qx, qy, qz = _rotation_to_quat(R_w2c)
            name = name or f"image{image_id}.jpg"
            fh.write(
                f"{image_id} {qw!r} {qx!r} {qy!r} {qz!r} "
                f"{t[0]!r} {t[1]!r} {t[2]!r} 1 {name}\n\n"
            )
