"""
Procedural Expressions

An expression is a smooth displacement field made of compactly supported
Wendland bumps at facial sites of the subject plus a jaw hinge. The bump
part is linear in the magnitude; the hinge angle is proportional to it.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..geometry.mesh import TriMesh
from ..registration.template import hinge_transform
from ..utils.rng import make_rng
from .shapes import SyntheticConfig, SyntheticSubject

logger = logging.getLogger(__name__)

EXPRESSION_SITES = (
    "mouth_corner_l",
    "mouth_corner_r",
    "lip_upper",
    "lip_lower",
    "cheek_l",
    "cheek_r",
    "eye_outer_l",
    "eye_outer_r",
    "brow_inner_l",
    "brow_inner_r",
    "brow_outer_l",
    "brow_outer_r",
)

JAW_AXIS = np.array([1.0, 0.0, 0.0])
JAW_BAND = 0.06
JAW_DEPTH_BAND = 0.2


def wendland(r: np.ndarray) -> np.ndarray:
    """Wendland C2 kernel ``(1 - r)^4 (4 r + 1)`` supported on [0, 1]."""
    r = np.clip(r, 0.0, 1.0)
    return (1.0 - r) ** 4 * (4.0 * r + 1.0)


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def jaw_pivot(subject: SyntheticSubject) -> np.ndarray:
    """Hinge pivot behind and below the mouth, on the symmetry plane."""
    mouth = 0.5 * (subject.site_position("mouth_corner_l") + subject.site_position("mouth_corner_r"))
    return np.array([0.0, mouth[1] - 0.05, mouth[2] - 0.45])


def jaw_weights(points: np.ndarray, mouth_height: float) -> np.ndarray:
    """Skinning weights of the jaw: exactly 1 below the mouth band at the front, 0 above the mouth."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    below = smoothstep((mouth_height - points[:, 1]) / JAW_BAND)
    front = smoothstep((points[:, 2] + 0.1) / JAW_DEPTH_BAND)
    return below * front


def mouth_height(subject: SyntheticSubject) -> float:
    return float(0.5 * (subject.site_position("mouth_corner_l")[1] + subject.site_position("mouth_corner_r")[1]))


@dataclass
class SyntheticExpression:
    """
    Attributes:
        seed: Expression seed
        sites: Names of the bump sites
        vectors: Displacement vector per bump at unit magnitude (E, 3)
        radii: Support radius per bump (E,)
        jaw_angle: Hinge angle at unit magnitude (radians)
    """

    seed: int
    sites: Tuple[str, ...]
    vectors: np.ndarray
    radii: np.ndarray
    jaw_angle: float = 0.0

    def bump_displacement(self, points: np.ndarray, subject: SyntheticSubject, magnitude: float = 1.0) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        out = np.zeros_like(points)
        for site, vector, radius in zip(self.sites, self.vectors, self.radii):
            centre = subject.site_position(site)
            r = np.linalg.norm(points - centre, axis=1) / radius
            out += wendland(r)[:, None] * vector[None, :]
        return magnitude * out

    def hinge_displacement(self, points: np.ndarray, subject: SyntheticSubject, magnitude: float = 1.0) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        angle = self.jaw_angle * magnitude
        if angle == 0.0:
            return np.zeros_like(points)
        weights = jaw_weights(points, mouth_height(subject))
        return hinge_transform(points, jaw_pivot(subject), JAW_AXIS, weights, angle) - points

    def displacement(self, points: np.ndarray, subject: SyntheticSubject, magnitude: float = 1.0, hinge: bool = True) -> np.ndarray:
        """
        Exact displacement at arbitrary canonical points.

        Args:
            points: Neutral-space points (N, 3)
            subject: The subject whose sites anchor the bumps
            magnitude: Expression strength; 0 is the identity map
            hinge: Include the jaw rotation

        Returns:
            np.ndarray: Displacements (N, 3)
        """
        out = self.bump_displacement(points, subject, magnitude)
        if hinge:
            out += self.hinge_displacement(points, subject, magnitude)
        return out

    def to_dict(self) -> Dict:
        return {
            "seed": self.seed,
            "sites": list(self.sites),
            "vectors": self.vectors.tolist(),
            "radii": self.radii.tolist(),
            "jaw_angle": self.jaw_angle,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SyntheticExpression":
        return cls(
            int(data["seed"]),
            tuple(data["sites"]),
            np.asarray(data["vectors"], dtype=np.float64).reshape(-1, 3),
            np.asarray(data["radii"], dtype=np.float64),
            float(data["jaw_angle"]),
        )


def make_expression(seed: int, config: Optional[SyntheticConfig] = None, sites: Sequence[str] = EXPRESSION_SITES) -> SyntheticExpression:
    """Random expression; deterministic per seed."""
    config = config or SyntheticConfig()
    rng = make_rng(seed, "expression", algorithm=config.rng)
    vectors = config.expression_scale * rng.standard_normal((len(sites), 3))
    radii = rng.uniform(0.12, 0.2, size=len(sites))
    jaw_angle = float(rng.uniform(0.0, config.max_jaw_angle)) if rng.random() < 0.6 else 0.0
    return SyntheticExpression(seed, tuple(sites), vectors, radii, jaw_angle)


def apply_expression(
    subject: SyntheticSubject,
    expression: SyntheticExpression,
    magnitude: float = 1.0,
    mesh: Optional[TriMesh] = None,
    hinge: bool = True,
) -> Tuple[TriMesh, np.ndarray]:
    """
    Pose a mesh of ``subject``.

    Args:
        subject: Subject
        expression: Expression
        magnitude: Strength
        mesh: Mesh to pose; the subject's neutral mesh by default
        hinge: Include the jaw rotation

    Returns:
        Tuple of the posed mesh (same topology and labels) and the per-vertex displacements
    """
    mesh = mesh if mesh is not None else subject.neutral
    if mesh is None:
        raise ValueError("Subject has no neutral mesh; generate it with meshes")
    delta = expression.displacement(mesh.vertices, subject, magnitude, hinge=hinge)
    return mesh.with_vertices(mesh.vertices + delta), delta


def interpolate_sequence(
    subject: SyntheticSubject,
    expression: SyntheticExpression,
    num_frames: int,
    mesh: Optional[TriMesh] = None,
    peak: float = 1.0,
) -> Tuple[np.ndarray, list]:
    """
    Neutral-to-expression-to-neutral sequence.

    Returns:
        Tuple of per-frame magnitudes (T,) and the posed meshes
    """
    if num_frames < 1:
        raise ValueError("A sequence needs at least one frame")
    t = np.linspace(0.0, 1.0, num_frames) if num_frames > 1 else np.zeros(1)
    magnitudes = peak * np.sin(np.pi * t) ** 2
    meshes = [apply_expression(subject, expression, float(m), mesh)[0] for m in magnitudes]
    return magnitudes, meshes
