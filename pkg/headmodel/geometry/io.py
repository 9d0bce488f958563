"""
File I/O for meshes, oriented point clouds, JSON documents and loss curves.

Meshes go through trimesh (ASCII OBJ, binary PLY). Oriented point clouds use
a small binary little-endian PLY codec built on NumPy structured arrays, so
normals and labels survive a round trip exactly.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import trimesh

from ..errors import FileFormatError
from .mesh import OrientedPointCloud, TriMesh

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MESH_FORMATS = (".obj", ".ply")

_POINT_FIELDS = [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
_LABEL_FIELD = ("label", "u1")
_PLY_TYPES = {"<f4": "float", "u1": "uchar"}
_END_HEADER = b"end_header\n"


def _mesh_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix not in MESH_FORMATS:
        raise FileFormatError(f"Unsupported mesh format '{suffix}' ({path}); expected one of {MESH_FORMATS}")
    return suffix[1:]


def save_mesh(path: PathLike, mesh: TriMesh) -> Path:
    """Write a mesh as ASCII OBJ or binary little-endian PLY, chosen by suffix."""
    path = Path(path)
    file_type = _mesh_format(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tm = mesh.to_trimesh()
    if file_type == "ply":
        tm.export(str(path), file_type="ply", encoding="binary")
    else:
        tm.export(str(path), file_type="obj", include_normals=False)
    logger.debug("Wrote %s (%d vertices, %d faces)", path, mesh.num_vertices, mesh.num_faces)
    return path


def load_mesh(path: PathLike) -> TriMesh:
    """
    Read an OBJ or PLY mesh without merging or reordering vertices.

    Raises:
        FileNotFoundError: If the file does not exist
        FileFormatError: If the file cannot be parsed as a triangle mesh
    """
    path = Path(path)
    file_type = _mesh_format(path)
    if not path.is_file():
        raise FileNotFoundError(f"Mesh file not found: {path}")
    try:
        tm = trimesh.load(str(path), file_type=file_type, process=False, force="mesh")
    except Exception as exc:
        raise FileFormatError(f"Cannot parse mesh {path}: {exc}") from exc
    if not isinstance(tm, trimesh.Trimesh):
        raise FileFormatError(f"{path} does not contain a triangle mesh")
    return TriMesh.from_trimesh(tm)


def _cloud_dtype(with_labels: bool) -> np.dtype:
    return np.dtype(_POINT_FIELDS + ([_LABEL_FIELD] if with_labels else []))


def encode_point_cloud(cloud: OrientedPointCloud) -> bytes:
    """Binary little-endian PLY bytes with ``x y z nx ny nz`` and an optional ``label``."""
    with_labels = cloud.labels is not None
    dtype = _cloud_dtype(with_labels)
    records = np.empty(len(cloud), dtype=dtype)
    for axis, name in enumerate("xyz"):
        records[name] = cloud.points[:, axis]
        records[f"n{name}"] = cloud.normals[:, axis]
    if with_labels:
        if np.any((cloud.labels < 0) | (cloud.labels > 255)):
            raise ValueError("Point labels must fit in an unsigned byte")
        records["label"] = cloud.labels
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(cloud)}"]
    fields = _POINT_FIELDS + ([_LABEL_FIELD] if with_labels else [])
    header += [f"property {_PLY_TYPES[kind]} {name}" for name, kind in fields]
    return ("\n".join(header) + "\n").encode("ascii") + _END_HEADER + records.tobytes()


def decode_point_cloud(data: bytes) -> OrientedPointCloud:
    """
    Parse bytes written by ``encode_point_cloud``.

    Normals are renormalised after the float32 round trip.

    Raises:
        FileFormatError: On a malformed header or a truncated body
    """
    end = data.find(_END_HEADER)
    if not data.startswith(b"ply\n") or end < 0:
        raise FileFormatError("Not a PLY point cloud (missing 'ply' magic or 'end_header')")
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    if "format binary_little_endian 1.0" not in lines:
        raise FileFormatError("Only binary little-endian PLY point clouds are supported")
    count = None
    fields = []
    for line in lines:
        tokens = line.split()
        if tokens[:2] == ["element", "vertex"] and len(tokens) == 3 and tokens[2].isdigit():
            count = int(tokens[2])
        elif tokens[:1] == ["property"] and len(tokens) == 3:
            fields.append(tuple(tokens[1:]))
    names = [name for _, name in fields]
    expected = [name for name, _ in _POINT_FIELDS]
    with_labels = names == expected + ["label"]
    if count is None or not (names == expected or with_labels):
        raise FileFormatError(f"Unexpected PLY vertex layout {names}")
    dtype = _cloud_dtype(with_labels)
    body = data[end + len(_END_HEADER):]
    if len(body) != count * dtype.itemsize:
        raise FileFormatError(f"PLY body holds {len(body)} bytes, expected {count * dtype.itemsize}")
    records = np.frombuffer(body, dtype=dtype, count=count)
    points = np.stack([records[name] for name in "xyz"], axis=1).astype(np.float64)
    normals = np.stack([records[f"n{name}"] for name in "xyz"], axis=1).astype(np.float64)
    labels = records["label"].astype(np.int64) if with_labels else None
    return OrientedPointCloud.from_unnormalised(points, normals, labels)


def save_point_cloud(path: PathLike, cloud: OrientedPointCloud) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_point_cloud(cloud))
    return path


def load_point_cloud(path: PathLike) -> OrientedPointCloud:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Point cloud file not found: {path}")
    return decode_point_cloud(path.read_bytes())


def save_json(path: PathLike, document: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True))
    return path


def load_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"JSON file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path} is not valid JSON: {exc}") from exc


def save_csv(path: PathLike, rows: Sequence[Dict[str, Any]], columns: List[str] = None) -> Path:
    """Write dictionaries as CSV rows, e.g. one row per epoch of a loss curve."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0].keys()) if rows else [])
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return path
