"""
Single-view depth observations.

Meshes are rasterised orthographically along the view axis with a z-buffer,
so only first hits survive. The camera looks down the -z axis of the view
frame; ``viewpoint`` is a yaw angle of the head in front of the camera.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import DegenerateInputError
from ..geometry.mesh import OrientedPointCloud, TriMesh
from ..geometry.sampling import interpolate

logger = logging.getLogger(__name__)

VIEW_DIRECTION = np.array([0.0, 0.0, 1.0])


def view_rotation(viewpoint: float) -> np.ndarray:
    """Rotation taking canonical coordinates into the view frame (yaw about +y)."""
    return Rotation.from_rotvec([0.0, float(viewpoint), 0.0]).as_matrix()


def _rasterize(vertices: np.ndarray, faces: np.ndarray, grid: int, margin: float = 1e-3) -> Tuple[np.ndarray, np.ndarray]:
    """
    Z-buffer of a mesh given in the view frame.

    Returns:
        Tuple of the front face per covered pixel (P,) and barycentric
        coordinates of the pixel centre in that face (P, 3)
    """
    lo = vertices[:, :2].min(axis=0) - margin
    hi = vertices[:, :2].max(axis=0) + margin
    size = float(np.max(hi - lo)) / grid
    tri = vertices[faces]
    pix_lo = np.ceil((tri[:, :, :2].min(axis=1) - lo) / size - 0.5).astype(np.int64)
    pix_hi = np.floor((tri[:, :, :2].max(axis=1) - lo) / size - 0.5).astype(np.int64)
    pix_lo = np.clip(pix_lo, 0, grid - 1)
    pix_hi = np.clip(pix_hi, -1, grid - 1)
    nx = np.maximum(pix_hi[:, 0] - pix_lo[:, 0] + 1, 0)
    ny = np.maximum(pix_hi[:, 1] - pix_lo[:, 1] + 1, 0)
    counts = nx * ny
    if counts.sum() == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 3))

    face = np.repeat(np.arange(len(faces)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    px = pix_lo[face, 0] + local % nx[face]
    py = pix_lo[face, 1] + local // nx[face]
    centre = lo + (np.stack([px, py], axis=1) + 0.5) * size

    a, b, c = tri[face, 0, :2], tri[face, 1, :2], tri[face, 2, :2]
    v0, v1, v2 = b - a, c - a, centre - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    valid = np.abs(det) > 1e-18
    det = np.where(valid, det, 1.0)
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    l0 = 1.0 - l1 - l2
    inside = valid & (l0 >= 0.0) & (l1 >= 0.0) & (l2 >= 0.0)
    face, bary = face[inside], np.stack([l0, l1, l2], axis=1)[inside]
    pixel = (py * grid + px)[inside]
    depth = np.einsum("nk,nk->n", bary, tri[face, :, 2])

    # Largest z is closest to the camera; keep the first entry per pixel.
    order = np.lexsort((-depth, pixel))
    first = np.ones(len(order), dtype=bool)
    first[1:] = pixel[order][1:] != pixel[order][:-1]
    keep = order[first]
    return face[keep], bary[keep]


def depth_hits(
    mesh: TriMesh,
    viewpoint: float = 0.0,
    n: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    grid: int = 256,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Visible surface locations as (face, barycentric) pairs.

    Args:
        mesh: Mesh to observe
        viewpoint: Yaw of the head relative to the camera (radians)
        n: Subsample size; all hits when None or larger than the hit count
        rng: Generator used for subsampling
        grid: Pixels per image axis

    Returns:
        Tuple of face indices (P,) and barycentric coordinates (P, 3)

    Raises:
        DegenerateInputError: Empty mesh or no pixel hits the mesh
    """
    mesh.require_non_empty()
    rotated = mesh.vertices @ view_rotation(viewpoint).T
    faces, bary = _rasterize(rotated, mesh.faces, grid)
    if len(faces) == 0:
        raise DegenerateInputError("Depth rendering produced no hits")
    if n is not None and n < len(faces):
        rng = rng if rng is not None else np.random.default_rng(0)
        index = np.sort(rng.choice(len(faces), size=n, replace=False))
        faces, bary = faces[index], bary[index]
    elif n is not None and n > len(faces):
        logger.warning("Requested %d depth points but only %d pixels hit the mesh", n, len(faces))
    return faces, bary


def render_depth_cloud(
    mesh: TriMesh,
    viewpoint: float = 0.0,
    n: int = 5000,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    grid: int = 256,
) -> OrientedPointCloud:
    """
    Render a frontal depth observation as an oriented point cloud.

    Points lie in canonical coordinates; normals are face normals turned
    toward the camera. Noise is Gaussian along the view ray.

    Args:
        mesh: Mesh to observe
        viewpoint: Yaw of the head relative to the camera (radians)
        n: Number of points
        noise: Standard deviation of the depth noise (canonical units)
        rng: Generator for subsampling and noise
        grid: Pixels per image axis

    Returns:
        OrientedPointCloud: Visible samples with face labels when the mesh is labelled
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    faces, bary = depth_hits(mesh, viewpoint, n, rng, grid)
    points = interpolate(mesh, faces, bary)
    view = VIEW_DIRECTION @ view_rotation(viewpoint)
    normals = mesh.face_normals[faces]
    normals = np.where((normals @ view)[:, None] < 0.0, -normals, normals)
    if noise > 0.0:
        points = points + noise * rng.standard_normal(len(points))[:, None] * view[None, :]
    labels = None if mesh.labels is None else mesh.face_labels[faces]
    logger.debug("Rendered %d depth points (viewpoint %.3f, noise %.3g)", len(points), viewpoint, noise)
    return OrientedPointCloud(points, normals, labels)
