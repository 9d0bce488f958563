"""
Zero level-set extraction with marching cubes.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from skimage.measure import marching_cubes

from .mesh import TriMesh

logger = logging.getLogger(__name__)

SDFEvaluator = Callable[[np.ndarray], np.ndarray]

DEFAULT_BBOX = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))


@dataclass
class ExtractionResult:
    mesh: TriMesh
    empty: bool
    spacing: Tuple[float, float, float]


def _resolution(resolution: Union[int, Sequence[int]]) -> Tuple[int, int, int]:
    res = (resolution,) * 3 if np.isscalar(resolution) else tuple(resolution)
    if len(res) != 3 or any(int(r) < 2 for r in res):
        raise ValueError(f"Resolution must be at least 2 per axis, got {resolution}")
    return tuple(int(r) for r in res)


def evaluate_grid(sdf: SDFEvaluator, bbox=DEFAULT_BBOX, resolution: Union[int, Sequence[int]] = 128, chunk: int = 65536) -> np.ndarray:
    """SDF values on a regular grid, shape ``resolution`` (x, y, z ordering)."""
    res = _resolution(resolution)
    lo, hi = np.asarray(bbox[0], dtype=np.float64), np.asarray(bbox[1], dtype=np.float64)
    axes = [np.linspace(lo[i], hi[i], res[i]) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    values = np.empty(len(grid))
    for start in range(0, len(grid), chunk):
        values[start:start + chunk] = np.asarray(sdf(grid[start:start + chunk])).reshape(-1)
    return values.reshape(res)


def extract_mesh(
    sdf: SDFEvaluator,
    bbox=DEFAULT_BBOX,
    resolution: Union[int, Sequence[int]] = 128,
    chunk: int = 65536,
) -> ExtractionResult:
    """
    Triangulate the zero level set of ``sdf`` inside ``bbox``.

    Args:
        sdf: Batched evaluator mapping (N, 3) points to (N,) values
        bbox: ``(lower corner, upper corner)``
        resolution: Grid samples per axis (an int or three ints, at least 2)
        chunk: Points per evaluator call

    Returns:
        ExtractionResult: Outward-oriented mesh; ``empty`` is set when the
        field has no sign change in the box
    """
    res = _resolution(resolution)
    lo, hi = np.asarray(bbox[0], dtype=np.float64), np.asarray(bbox[1], dtype=np.float64)
    spacing = tuple(float(s) for s in (hi - lo) / (np.asarray(res) - 1))
    volume = evaluate_grid(sdf, bbox, res, chunk)
    if not np.all(np.isfinite(volume)):
        raise ValueError("SDF evaluator returned non-finite values")
    if volume.min() > 0.0 or volume.max() < 0.0:
        logger.info("No sign change in the extraction box; returning an empty mesh")
        return ExtractionResult(TriMesh.empty(), True, spacing)
    verts, faces, _, _ = marching_cubes(volume, level=0.0, spacing=spacing, allow_degenerate=False)
    mesh = TriMesh(verts + lo, faces)
    if mesh.is_empty:
        return ExtractionResult(mesh, True, spacing)
    if mesh.signed_volume() < 0.0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, ::-1].copy())
    logger.debug("Extracted %d vertices, %d faces", mesh.num_vertices, mesh.num_faces)
    return ExtractionResult(mesh, False, spacing)
