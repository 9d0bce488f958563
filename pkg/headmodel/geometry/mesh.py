"""
Surface carriers: triangle meshes and oriented point clouds.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import trimesh

from ..errors import DegenerateInputError, DimensionMismatchError

LABEL_BACK = 0
LABEL_FRONT = 1

UNIT_NORMAL_TOLERANCE = 1e-6


@dataclass
class TriMesh:
    """
    Triangle mesh with optional per-vertex integer labels.

    Attributes:
        vertices: Positions (N, 3)
        faces: Vertex indices (M, 3)
        labels: Optional labels (N,), e.g. ``LABEL_FRONT``/``LABEL_BACK``
    """

    vertices: np.ndarray
    faces: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("Face indices out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("Faces with repeated vertex indices")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.shape[0] != len(self.vertices):
                raise DimensionMismatchError("vertex labels", len(self.vertices), self.labels.shape[0])

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        """Corner positions (M, 3, 3)."""
        return self.vertices[self.faces]

    def _cross(self) -> np.ndarray:
        tri = self.triangles
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    @property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    @property
    def face_normals(self) -> np.ndarray:
        cross = self._cross()
        norm = np.linalg.norm(cross, axis=1, keepdims=True)
        return cross / np.where(norm > 0.0, norm, 1.0)

    @property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals."""
        normals = np.zeros_like(self.vertices)
        cross = self._cross()
        for corner in range(3):
            np.add.at(normals, self.faces[:, corner], cross)
        norm = np.linalg.norm(normals, axis=1, keepdims=True)
        return normals / np.where(norm > 0.0, norm, 1.0)

    @property
    def face_labels(self) -> Optional[np.ndarray]:
        """Maximum label over each face's vertices."""
        if self.labels is None:
            return None
        return self.labels[self.faces].max(axis=1)

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (E, 2), sorted per row."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    def signed_volume(self) -> float:
        tri = self.triangles
        return float(np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0)

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.faces.copy(), None if self.labels is None else self.labels.copy())

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same topology and labels, new positions."""
        return TriMesh(vertices, self.faces.copy(), None if self.labels is None else self.labels.copy())

    def require_non_empty(self, what: str = "mesh") -> None:
        if self.is_empty:
            raise DegenerateInputError(f"{what} is empty")

    def to_trimesh(self) -> trimesh.Trimesh:
        return trimesh.Trimesh(vertices=self.vertices, faces=self.faces, process=False)

    @classmethod
    def from_trimesh(cls, mesh: trimesh.Trimesh, labels: Optional[np.ndarray] = None) -> "TriMesh":
        return cls(np.asarray(mesh.vertices), np.asarray(mesh.faces), labels)


@dataclass
class OrientedPointCloud:
    """
    Points with unit normals and optional labels.
    """

    points: np.ndarray
    normals: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if self.normals.shape != self.points.shape:
            raise DimensionMismatchError("normals", self.points.shape, self.normals.shape)
        if len(self.points):
            norms = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_NORMAL_TOLERANCE):
                raise ValueError("Point cloud normals must have unit length")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(self.labels) != len(self.points):
                raise DimensionMismatchError("point labels", len(self.points), len(self.labels))

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_unnormalised(cls, points: np.ndarray, normals: np.ndarray, labels: Optional[np.ndarray] = None) -> "OrientedPointCloud":
        normals = np.asarray(normals, dtype=np.float64)
        norm = np.linalg.norm(normals, axis=1, keepdims=True)
        return cls(points, normals / np.where(norm > 0.0, norm, 1.0), labels)

    def subset(self, index: np.ndarray) -> "OrientedPointCloud":
        return OrientedPointCloud(self.points[index], self.normals[index], None if self.labels is None else self.labels[index])

    def require_non_empty(self, what: str = "point cloud") -> None:
        if len(self.points) == 0:
            raise DegenerateInputError(f"{what} is empty")


def mirror_mesh(mesh: TriMesh, axis: int = 0) -> TriMesh:
    """Reflect a mesh across a coordinate plane, keeping faces outward."""
    vertices = mesh.vertices.copy()
    vertices[:, axis] *= -1.0
    return TriMesh(vertices, mesh.faces[:, ::-1].copy(), None if mesh.labels is None else mesh.labels.copy())
