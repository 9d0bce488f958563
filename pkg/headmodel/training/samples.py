"""
Training sample sets.

Identity samples are drawn once per subject and subsampled every step;
deformation samples pair barycentric points of a neutral mesh with the same
barycentric points of a posed mesh in vertex correspondence.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import DegenerateInputError, DimensionMismatchError
from ..geometry.extraction import DEFAULT_BBOX
from ..geometry.mesh import OrientedPointCloud, TriMesh
from ..geometry.sampling import DEFAULT_REGION_WEIGHTS, interpolate, sample_barycentric, sample_surface

logger = logging.getLogger(__name__)

OFF_SURFACE_SIGMA = 0.01
UNIFORM_FRACTION = 0.1
TAU_FAR = 0.02
TAU_NEAR = 0.004


@dataclass
class IdentitySampleSet:
    """
    Attributes:
        surface: Surface points with unit normals and region labels
        off_surface: Perturbed and uniform box points (M, 3)
        anchors: Ground-truth anchors (K, 3)
    """

    surface: OrientedPointCloud
    off_surface: np.ndarray
    anchors: np.ndarray

    def __post_init__(self):
        self.off_surface = np.asarray(self.off_surface, dtype=np.float64).reshape(-1, 3)
        self.anchors = np.asarray(self.anchors, dtype=np.float64).reshape(-1, 3)

    def draw(self, rng: np.random.Generator, n_surface: int, n_off: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Random subset for one step.

        Returns:
            Tuple of surface points (n, 3), their normals (n, 3) and off-surface points (m, 3)
        """
        n_off = n_surface if n_off is None else n_off
        s = rng.choice(len(self.surface), size=min(n_surface, len(self.surface)), replace=False)
        o = rng.choice(len(self.off_surface), size=min(n_off, len(self.off_surface)), replace=False)
        return self.surface.points[s], self.surface.normals[s], self.off_surface[o]


@dataclass
class DeformationSampleSet:
    """
    Attributes:
        points: Canonical points (N, 3)
        displacements: Target displacements (N, 3)
        subject_index: Row of the identity code
        expression_index: Row of the expression code
    """

    points: np.ndarray
    displacements: np.ndarray
    subject_index: int = 0
    expression_index: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.displacements = np.asarray(self.displacements, dtype=np.float64).reshape(-1, 3)
        if self.points.shape != self.displacements.shape:
            raise DimensionMismatchError("deformation samples", self.points.shape, self.displacements.shape)
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.displacements))):
            raise ValueError("Deformation samples must be finite")

    def __len__(self) -> int:
        return len(self.points)

    def draw(self, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        index = rng.choice(len(self.points), size=min(n, len(self.points)), replace=False)
        return self.points[index], self.displacements[index]


def build_identity_samples(
    mesh: TriMesh,
    n_surface: int,
    anchors: np.ndarray,
    rng: np.random.Generator,
    n_off: Optional[int] = None,
    region_weights: Optional[Dict[int, float]] = None,
    sigma: float = OFF_SURFACE_SIGMA,
    uniform_fraction: float = UNIFORM_FRACTION,
    bbox=DEFAULT_BBOX,
) -> IdentitySampleSet:
    """
    Precompute the identity samples of one subject.

    Args:
        mesh: Neutral mesh with front/back vertex labels
        n_surface: Surface samples
        anchors: Ground-truth anchors (K, 3)
        rng: Generator
        n_off: Off-surface samples; ``n_surface`` by default
        region_weights: Surface split per label; 80/20 front/back by default
        sigma: Standard deviation of the surface perturbation
        uniform_fraction: Share of off-surface samples drawn uniformly in ``bbox``
        bbox: Box of the uniform samples

    Returns:
        IdentitySampleSet

    Raises:
        DegenerateInputError: Unlabelled or empty mesh, or an empty region
    """
    if mesh.labels is None:
        raise DegenerateInputError("Identity samples need a front/back labelled mesh")
    n_off = n_surface if n_off is None else n_off
    surface = sample_surface(mesh, n_surface, region_weights or DEFAULT_REGION_WEIGHTS, rng)
    n_uniform = int(round(uniform_fraction * n_off))
    n_near = n_off - n_uniform
    base = surface.points[rng.integers(0, len(surface), size=n_near)]
    near = base + sigma * rng.standard_normal((n_near, 3))
    lo, hi = np.asarray(bbox[0], dtype=np.float64), np.asarray(bbox[1], dtype=np.float64)
    uniform = lo + (hi - lo) * rng.random((n_uniform, 3))
    return IdentitySampleSet(surface, np.concatenate([near, uniform]), anchors)


def build_deformation_samples(
    neutral: TriMesh,
    posed: TriMesh,
    n: int,
    rng: np.random.Generator,
    tau_far: float = TAU_FAR,
    tau_near: float = TAU_NEAR,
    subject_index: int = 0,
    expression_index: int = 0,
) -> DeformationSampleSet:
    """
    Displacement samples from a neutral and a posed mesh in correspondence.

    Every barycentric sample contributes three pairs: the surface point and
    two points offset along the face normal by N(0, tau^2) draws, one for
    each of ``tau_far`` and ``tau_near``. The offset is applied with the
    same coefficient on both meshes.

    Raises:
        DimensionMismatchError: If the meshes do not share their topology
    """
    if neutral.num_vertices != posed.num_vertices or not np.array_equal(neutral.faces, posed.faces):
        raise DimensionMismatchError("posed mesh topology", (neutral.num_vertices, neutral.num_faces), (posed.num_vertices, posed.num_faces))
    faces, bary = sample_barycentric(neutral, n, rng)
    x = interpolate(neutral, faces, bary)
    x_posed = interpolate(posed, faces, bary)
    n_neutral = neutral.face_normals[faces]
    n_posed = posed.face_normals[faces]
    points = [x]
    targets = [x_posed]
    for tau in (tau_far, tau_near):
        alpha = tau * rng.standard_normal(n)[:, None]
        points.append(x + alpha * n_neutral)
        targets.append(x_posed + alpha * n_posed)
    points = np.concatenate(points)
    return DeformationSampleSet(points, np.concatenate(targets) - points, subject_index, expression_index)
