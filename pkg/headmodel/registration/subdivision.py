"""
Region-restricted midpoint subdivision.

Triangles of the selected region are split into four (red refinement);
neighbouring triangles with one split edge are bisected (green closure) and
triangles with two or more split edges join the red set, so the result has
no T-junctions. New vertices sit at edge midpoints and therefore leave the
surface geometry unchanged.
"""

import logging
from typing import Iterable, Union

import numpy as np

from ..geometry.mesh import TriMesh

logger = logging.getLogger(__name__)


def subdivision_rounds(factor: int) -> int:
    """Rounds needed to multiply the region's triangle count by at least ``factor``."""
    if factor < 1:
        raise ValueError(f"Subdivision factor must be at least 1, got {factor}")
    rounds = 0
    while 4 ** rounds < factor:
        rounds += 1
    return rounds


def _face_edges(faces: np.ndarray):
    corners = np.stack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=1)
    edges, inverse = np.unique(np.sort(corners, axis=2).reshape(-1, 2), axis=0, return_inverse=True)
    return edges, np.asarray(inverse).reshape(-1, 3)


def _refine(mesh: TriMesh, red: np.ndarray) -> TriMesh:
    faces = mesh.faces
    edges, face_edge = _face_edges(faces)
    red = red.copy()
    while True:
        marked = np.zeros(len(edges), dtype=bool)
        marked[face_edge[red].ravel()] = True
        count = marked[face_edge].sum(axis=1)
        promote = ~red & (count >= 2)
        if not promote.any():
            break
        red |= promote

    split = np.flatnonzero(marked)
    midpoint = np.full(len(edges), -1, dtype=np.int64)
    midpoint[split] = mesh.num_vertices + np.arange(len(split))
    vertices = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[edges[split, 0]] + mesh.vertices[edges[split, 1]])])
    labels = None
    if mesh.labels is not None:
        labels = np.concatenate([mesh.labels, np.maximum(mesh.labels[edges[split, 0]], mesh.labels[edges[split, 1]])])

    m = midpoint[face_edge]
    a, b, c = faces[red].T
    mab, mbc, mca = m[red].T
    red_faces = np.concatenate([
        np.stack([a, mab, mca], axis=1),
        np.stack([mab, b, mbc], axis=1),
        np.stack([mca, mbc, c], axis=1),
        np.stack([mab, mbc, mca], axis=1),
    ])

    green = ~red & (count == 1)
    green_faces = []
    if green.any():
        which = np.argmax(marked[face_edge[green]], axis=1)
        rolled = np.array([np.roll(f, -k) for f, k in zip(faces[green], which)]).reshape(-1, 3)
        mid = m[green][np.arange(len(which)), which]
        green_faces = [np.stack([rolled[:, 0], mid, rolled[:, 2]], axis=1), np.stack([mid, rolled[:, 1], rolled[:, 2]], axis=1)]

    keep = faces[~red & (count == 0)]
    new_faces = np.concatenate([keep, red_faces] + green_faces)
    return TriMesh(vertices, new_faces, labels)


def subdivide_region(mesh: TriMesh, region_labels: Union[int, Iterable[int]], factor: int) -> TriMesh:
    """
    Subdivide the triangles whose face label lies in ``region_labels``.

    Args:
        mesh: Labelled mesh
        region_labels: One label or several
        factor: Minimum multiplier of the region's triangle count; rounds are
            ``ceil(log4(factor))``

    Returns:
        TriMesh: Refined mesh; new vertices carry the larger label of their edge

    Raises:
        ValueError: Factor below one, or a region request on an unlabelled mesh
    """
    rounds = subdivision_rounds(factor)
    if rounds == 0:
        return mesh.copy()
    if mesh.labels is None:
        raise ValueError("Region subdivision needs vertex labels")
    region = np.atleast_1d(np.asarray(list(region_labels) if not np.isscalar(region_labels) else [region_labels]))
    out = mesh
    for _ in range(rounds):
        red = np.isin(out.face_labels, region)
        if not red.any():
            logger.warning("Subdivision region %s has no faces", region.tolist())
            break
        out = _refine(out, red)
    logger.debug("Subdivided %d -> %d faces in %d round(s)", mesh.num_faces, out.num_faces, rounds)
    return out
