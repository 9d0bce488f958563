"""
Exact nearest-neighbour search and point-to-surface distances.
"""

from typing import Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateInputError, DimensionMismatchError
from .mesh import OrientedPointCloud, TriMesh


class NNIndex:
    """
    Immutable kd-tree over a point set; safe to share across threads.

    Args:
        points: Target points (N, 3), N > 0
    """

    def __init__(self, points: np.ndarray):
        points = np.array(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise DimensionMismatchError("target points", "(N, 3)", points.shape)
        if len(points) == 0:
            raise DegenerateInputError("Nearest-neighbour target is empty")
        self.points = points
        self.points.setflags(write=False)
        self._tree = cKDTree(points)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, queries: np.ndarray, workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
        """
        Nearest target of every query.

        Returns:
            Tuple of indices (Q,) and Euclidean distances (Q,)
        """
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        dist, idx = self._tree.query(queries, k=1, workers=workers)
        return np.asarray(idx, dtype=np.int64), np.asarray(dist, dtype=np.float64)

    def query_k(self, queries: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        k = min(k, len(self.points))
        dist, idx = self._tree.query(queries, k=k)
        return np.asarray(idx, dtype=np.int64).reshape(len(queries), k), np.asarray(dist).reshape(len(queries), k)


def nn_query(target: Union[np.ndarray, OrientedPointCloud, NNIndex], queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbour indices and distances of ``queries`` in ``target``."""
    if isinstance(target, NNIndex):
        return target.query(queries)
    if isinstance(target, OrientedPointCloud):
        target = target.points
    return NNIndex(np.array(target, dtype=np.float64)).query(queries)


def closest_points_on_triangles(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Closest point on each triangle to the matching query point.

    Args:
        points: Queries (Q, 3)
        triangles: Corners (Q, 3, 3)

    Returns:
        np.ndarray: Closest points (Q, 3)
    """
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    ab, ac = b - a, c - a
    ap, bp, cp = points - a, points - b, points - c
    d1, d2 = np.einsum("ij,ij->i", ab, ap), np.einsum("ij,ij->i", ac, ap)
    d3, d4 = np.einsum("ij,ij->i", ab, bp), np.einsum("ij,ij->i", ac, bp)
    d5, d6 = np.einsum("ij,ij->i", ab, cp), np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    def safe_div(num, den):
        return num / np.where(np.abs(den) > 1e-300, den, 1.0)

    denom = va + vb + vc
    v = safe_div(vb, denom)
    w = safe_div(vc, denom)
    out = a + ab * v[:, None] + ac * w[:, None]

    # Voronoi regions, lowest priority first.
    bc_mask = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    t = safe_div(d4 - d3, (d4 - d3) + (d5 - d6))
    out = np.where(bc_mask[:, None], b + (c - b) * t[:, None], out)
    ac_mask = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = safe_div(d2, d2 - d6)
    out = np.where(ac_mask[:, None], a + ac * t[:, None], out)
    out = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, out)
    ab_mask = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = safe_div(d1, d1 - d3)
    out = np.where(ab_mask[:, None], a + ab * t[:, None], out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, out)
    out = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, out)
    return out


class SurfaceIndex:
    """
    Point-to-surface distances on a triangle mesh.

    Candidate faces come from a kd-tree over face centroids and vertices;
    the exact closest point is then computed on every candidate.

    Args:
        mesh: Target mesh (non-empty)
        candidates: Candidate faces examined per query
    """

    def __init__(self, mesh: TriMesh, candidates: int = 16):
        mesh.require_non_empty("target mesh")
        self.mesh = mesh
        self.candidates = candidates
        self._triangles = mesh.triangles
        self._normals = mesh.face_normals
        centroids = self._triangles.mean(axis=1)
        vertex_face = np.zeros(mesh.num_vertices, dtype=np.int64)
        vertex_face[mesh.faces.ravel()] = np.repeat(np.arange(mesh.num_faces), 3)
        used = np.zeros(mesh.num_vertices, dtype=bool)
        used[mesh.faces.ravel()] = True
        self._owner = np.concatenate([np.arange(mesh.num_faces), vertex_face[used]])
        self._index = NNIndex(np.concatenate([centroids, mesh.vertices[used]]))

    def query(self, queries: np.ndarray, chunk: int = 50000) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Returns:
            Tuple of distances (Q,), closest points (Q, 3) and closest-face normals (Q, 3)
        """
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        dist = np.empty(len(queries))
        closest = np.empty_like(queries)
        normals = np.empty_like(queries)
        for start in range(0, len(queries), chunk):
            q = queries[start:start + chunk]
            idx, _ = self._index.query_k(q, self.candidates)
            faces = self._owner[idx]
            k = faces.shape[1]
            flat = closest_points_on_triangles(np.repeat(q, k, axis=0), self._triangles[faces.ravel()]).reshape(len(q), k, 3)
            d = np.linalg.norm(flat - q[:, None, :], axis=-1)
            best = np.argmin(d, axis=1)
            rows = np.arange(len(q))
            dist[start:start + chunk] = d[rows, best]
            closest[start:start + chunk] = flat[rows, best]
            normals[start:start + chunk] = self._normals[faces[rows, best]]
        return dist, closest, normals


def point_to_mesh_distance(mesh: TriMesh, queries: np.ndarray, candidates: Optional[int] = None) -> np.ndarray:
    index = SurfaceIndex(mesh) if candidates is None else SurfaceIndex(mesh, candidates)
    return index.query(queries)[0]
