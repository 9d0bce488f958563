"""
Area-weighted surface sampling.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import DegenerateInputError
from .mesh import LABEL_BACK, LABEL_FRONT, OrientedPointCloud, TriMesh

logger = logging.getLogger(__name__)

DEFAULT_REGION_WEIGHTS = {LABEL_FRONT: 0.8, LABEL_BACK: 0.2}


def allocate_counts(n: int, weights: Dict[int, float]) -> Dict[int, int]:
    """
    Split ``n`` samples by weight: floor first, then the largest remainders.
    Ties are broken by label order, so the result is deterministic.
    """
    labels = sorted(weights)
    w = np.array([max(float(weights[label]), 0.0) for label in labels])
    if w.sum() <= 0.0:
        raise ValueError("Region weights must have a positive sum")
    exact = n * w / w.sum()
    counts = np.floor(exact).astype(int)
    remainder = n - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:remainder]] += 1
    return {label: int(c) for label, c in zip(labels, counts)}


def sample_barycentric(mesh: TriMesh, n: int, rng: np.random.Generator, faces: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Area-weighted face indices and barycentric coordinates.

    Args:
        mesh: Source mesh
        n: Number of samples
        rng: Generator
        faces: Optional subset of face indices to sample from

    Returns:
        Tuple of face indices (n,) and barycentric coordinates (n, 3)
    """
    candidates = np.arange(mesh.num_faces) if faces is None else np.asarray(faces)
    if len(candidates) == 0:
        raise DegenerateInputError("No faces to sample from")
    areas = mesh.face_areas[candidates]
    total = areas.sum()
    if total <= 0.0:
        raise DegenerateInputError("Faces to sample from have zero area")
    chosen = candidates[rng.choice(len(candidates), size=n, p=areas / total)]
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    return chosen, bary


def interpolate(mesh: TriMesh, faces: np.ndarray, bary: np.ndarray) -> np.ndarray:
    return np.einsum("nk,nkd->nd", bary, mesh.vertices[mesh.faces[faces]])


def sample_surface(
    mesh: TriMesh,
    n: int,
    region_weights: Optional[Dict[int, float]] = None,
    rng: Optional[np.random.Generator] = None,
    stratify: bool = True,
) -> OrientedPointCloud:
    """
    Sample points and face normals on a mesh.

    When the mesh carries labels and ``stratify`` is set, the number of
    samples per face label follows ``region_weights`` (80/20 front/back by
    default); within a region sampling is area-weighted.

    Args:
        mesh: Source mesh
        n: Number of samples
        region_weights: Weight per face label
        rng: Generator
        stratify: Split the samples by label; otherwise sample by area only

    Returns:
        OrientedPointCloud: Samples with face normals and face labels

    Raises:
        DegenerateInputError: If the mesh or a requested region is empty
    """
    mesh.require_non_empty()
    rng = rng if rng is not None else np.random.default_rng(0)
    face_labels = mesh.face_labels
    if face_labels is None or not stratify:
        faces, bary = sample_barycentric(mesh, n, rng)
    else:
        counts = allocate_counts(n, region_weights or DEFAULT_REGION_WEIGHTS)
        parts = []
        for label, count in counts.items():
            if count == 0:
                continue
            region = np.flatnonzero(face_labels == label)
            if len(region) == 0:
                raise DegenerateInputError(f"Region with label {label} has no faces")
            parts.append(sample_barycentric(mesh, count, rng, region))
        faces = np.concatenate([p[0] for p in parts])
        bary = np.concatenate([p[1] for p in parts])
    points = interpolate(mesh, faces, bary)
    labels = None if face_labels is None else face_labels[faces]
    return OrientedPointCloud(points, mesh.face_normals[faces], labels)
