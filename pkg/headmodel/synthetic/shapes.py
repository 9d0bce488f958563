"""
Procedural Head Shapes

Every synthetic subject is a star-shaped surface around the origin: an
ellipsoid radius plus Gaussian bumps placed at the named anchor sites. Bump
amplitudes are mirrored across the symmetry plane and then perturbed by an
asymmetry noise, so asymmetry 0 yields an exactly mirror-symmetric head.

The signed distance is the radial offset normalised by the gradient norm of
the radial function, which makes it unit-gradient on the surface.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import trimesh

from ..fields.layout import (
    BUILTIN_LAYOUTS,
    MIDDLE_SITES,
    PAIRED_SITES,
    REFERENCE_AXES,
    TRACKING_LANDMARKS,
    flip,
    site_direction,
    site_names,
)
from ..geometry.extraction import extract_mesh
from ..geometry.mesh import LABEL_BACK, LABEL_FRONT, TriMesh
from ..utils.rng import make_rng

logger = logging.getLogger(__name__)

FRONT_THRESHOLD = 0.2

# Typical bump amplitude per site; the random part is added on top.
SITE_PRIOR = {
    "nose_tip": 0.07,
    "nose_bridge": 0.03,
    "nose_wing": 0.02,
    "lip_upper": 0.015,
    "lip_lower": 0.015,
    "chin": 0.03,
    "eye_outer": -0.01,
    "eye_inner": -0.025,
    "brow_inner": 0.015,
    "brow_outer": 0.01,
    "cheekbone": 0.02,
    "ear": 0.04,
}


@dataclass
class SyntheticConfig:
    """
    Attributes:
        num_subjects: Training subjects
        num_test_subjects: Held-out subjects
        num_expressions: Expressions per subject
        mesh_resolution: Marching-cubes grid per axis for neutral meshes
        bbox_extent: Half size of the extraction box
        registered_subdivisions: Icosphere subdivisions of the registered topology
        axis_jitter: Relative standard deviation of the ellipsoid semi-axes
        bump_amplitude: Standard deviation of the random bump amplitudes
        bump_width: Angular width of the bumps (radians, chord metric)
        asymmetry: Default asymmetry level (fraction of the bump amplitude)
        site_jitter_deg: Standard deviation of mirrored site-direction jitter
        expression_scale: Standard deviation of expression displacement vectors
        max_jaw_angle: Largest jaw opening in radians
        depth_grid: Rasteriser resolution per axis
        depth_points: Points per rendered observation
        noise_mm: Observation noise along the view ray in millimetres
        rng: Bit generator name
    """

    num_subjects: int = 40
    num_test_subjects: int = 8
    num_expressions: int = 8
    mesh_resolution: int = 96
    bbox_extent: float = 0.95
    registered_subdivisions: int = 4
    axis_jitter: float = 0.04
    bump_amplitude: float = 0.02
    bump_width: float = 0.22
    asymmetry: float = 0.0
    site_jitter_deg: float = 2.0
    expression_scale: float = 0.02
    max_jaw_angle: float = 0.25
    depth_grid: int = 256
    depth_points: int = 5000
    noise_mm: float = 0.0
    rng: str = "philox"

    def __post_init__(self):
        if self.mesh_resolution < 8:
            raise ValueError(f"mesh_resolution must be at least 8, got {self.mesh_resolution}")
        if self.asymmetry < 0.0:
            raise ValueError(f"asymmetry must be non-negative, got {self.asymmetry}")

    @property
    def bbox(self) -> Tuple[Tuple[float, float, float], Tuple[float, float, float]]:
        e = self.bbox_extent
        return (-e, -e, -e), (e, e, e)


def front_labels(vertices: np.ndarray, threshold: float = FRONT_THRESHOLD) -> np.ndarray:
    """Face-region labels from the viewing direction of each vertex."""
    vertices = np.asarray(vertices, dtype=np.float64)
    norm = np.linalg.norm(vertices, axis=1)
    facing = vertices[:, 2] / np.where(norm > 0.0, norm, 1.0)
    return np.where(facing > threshold, LABEL_FRONT, LABEL_BACK).astype(np.int64)


def _landmark_angles() -> np.ndarray:
    """(azimuth, elevation) in degrees of the 68 facial landmarks."""
    rows: List[Tuple[float, float]] = []
    for az in np.linspace(-75.0, 75.0, 17):
        rows.append((az, -5.0 - 33.0 * np.cos(az / 75.0 * np.pi / 2.0)))
    for sign in (-1.0, 1.0):
        for az in np.linspace(10.0, 32.0, 5)[:: int(sign)]:
            rows.append((sign * az, 22.0 + 3.0 * np.sin((az - 10.0) / 22.0 * np.pi)))
    for el in (14.0, 9.0, 4.0, -1.0):
        rows.append((0.0, el))
    for az in np.linspace(-8.0, 8.0, 5):
        rows.append((az, -7.0))
    for sign in (-1.0, 1.0):
        t = np.linspace(0.0, 2.0 * np.pi, 6, endpoint=False)
        for a in t:
            rows.append((sign * 21.0 + 9.0 * np.cos(a), 8.0 + 3.0 * np.sin(a)))
    for a in np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False):
        rows.append((19.0 * np.cos(a), -19.0 + 6.0 * np.sin(a)))
    for a in np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False):
        rows.append((12.0 * np.cos(a), -19.0 + 2.5 * np.sin(a)))
    return np.asarray(rows)


LANDMARK_DIRECTIONS = site_direction(_landmark_angles()[:, 0], _landmark_angles()[:, 1])


def registered_topology(subdivisions: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Unit-sphere topology shared by all registered meshes.

    Returns:
        Tuple of unit directions (N, 3), faces (M, 3) and the vertex index of
        every landmark (68,)
    """
    sphere = trimesh.creation.icosphere(subdivisions=subdivisions, radius=1.0)
    directions = np.asarray(sphere.vertices, dtype=np.float64)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    landmark_indices = np.argmax(LANDMARK_DIRECTIONS @ directions.T, axis=1)
    return directions, np.asarray(sphere.faces, dtype=np.int64), landmark_indices


@dataclass
class SyntheticSubject:
    """
    One procedural identity.

    Attributes:
        seed: Identity seed
        asymmetry: Asymmetry level used at generation
        axes: Ellipsoid semi-axes (3,)
        site_directions: Unit direction of every named site
        bump_amplitudes: Bump amplitude per site
        bump_width: Angular bump width
        neutral: Marching-cubes mesh of the neutral shape
        registered: Fixed-topology mesh in correspondence across subjects
        landmark_indices: Landmark vertices of ``registered``
    """

    seed: int
    asymmetry: float
    axes: np.ndarray
    site_directions: Dict[str, np.ndarray]
    bump_amplitudes: Dict[str, float]
    bump_width: float
    neutral: Optional[TriMesh] = None
    registered: Optional[TriMesh] = None
    landmark_indices: Optional[np.ndarray] = None
    _site_matrix: np.ndarray = field(init=False, repr=False)
    _amplitude_vector: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        names = sorted(self.site_directions)
        self._site_matrix = np.array([self.site_directions[n] for n in names])
        self._amplitude_vector = np.array([self.bump_amplitudes[n] for n in names])

    # -- analytic shape -------------------------------------------------

    def radius(self, directions: np.ndarray) -> np.ndarray:
        """Surface radius along unit directions (N, 3)."""
        return self._radius_and_gradient(directions)[0]

    def _radius_and_gradient(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=np.float64).reshape(-1, 3)
        a2 = self.axes ** 2
        base = 1.0 / np.sqrt(np.sum(u * u / a2, axis=1))
        grad = -(base ** 3)[:, None] * u / a2
        diff = u[:, None, :] - self._site_matrix[None, :, :]
        s2 = self.bump_width ** 2
        bumps = self._amplitude_vector[None, :] * np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * s2))
        grad -= np.einsum("nb,nbd->nd", bumps, diff) / s2
        return base + bumps.sum(axis=1), grad

    def surface_points(self, directions: np.ndarray) -> np.ndarray:
        u = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        u = u / np.linalg.norm(u, axis=1, keepdims=True)
        return u * self.radius(u)[:, None]

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distance approximation, negative inside, unit gradient on the surface."""
        x = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        r = np.linalg.norm(x, axis=1)
        r_safe = np.maximum(r, 1e-9)
        u = x / r_safe[:, None]
        radius, grad = self._radius_and_gradient(u)
        tangential = grad - np.sum(grad * u, axis=1, keepdims=True) * u
        norm = np.sqrt(1.0 + np.sum(tangential * tangential, axis=1) / r_safe ** 2)
        return (r - radius) / norm

    # -- ground truth ---------------------------------------------------

    def site_position(self, name: str) -> np.ndarray:
        return self.surface_points(self.site_directions[name][None, :])[0]

    def anchors(self, num_anchors: int) -> np.ndarray:
        """Ground-truth anchors of a built-in layout (K, 3)."""
        names = site_names(num_anchors)
        if not names:
            return np.zeros((0, 3))
        return self.surface_points(np.array([self.site_directions[n] for n in names]))

    def landmarks(self) -> np.ndarray:
        """The 68 facial landmarks on the analytic surface."""
        if self.registered is not None and self.landmark_indices is not None:
            return self.registered.vertices[self.landmark_indices].copy()
        return self.surface_points(LANDMARK_DIRECTIONS)

    def tracking_landmarks(self) -> np.ndarray:
        return np.array([self.site_position(name) for name in TRACKING_LANDMARKS])

    def all_anchors(self) -> Dict[str, List[List[float]]]:
        return {str(k): self.anchors(k).tolist() for k in sorted(BUILTIN_LAYOUTS)}

    def to_dict(self) -> Dict:
        return {
            "seed": self.seed,
            "asymmetry": self.asymmetry,
            "axes": self.axes.tolist(),
            "bump_width": self.bump_width,
            "site_directions": {k: v.tolist() for k, v in sorted(self.site_directions.items())},
            "bump_amplitudes": dict(sorted(self.bump_amplitudes.items())),
        }


def _sample_parameters(seed: int, asymmetry: float, config: SyntheticConfig):
    rng = make_rng(seed, "subject", algorithm=config.rng)
    axes = np.asarray(REFERENCE_AXES) * (1.0 + config.axis_jitter * rng.standard_normal(3))
    directions: Dict[str, np.ndarray] = {}
    amplitudes: Dict[str, float] = {}
    for site, (az, el) in PAIRED_SITES.items():
        d_az, d_el = config.site_jitter_deg * rng.standard_normal(2)
        left = site_direction(az + d_az, el + d_el)
        directions[f"{site}_l"] = left
        directions[f"{site}_r"] = flip(left)
        amplitude = SITE_PRIOR.get(site, 0.0) + config.bump_amplitude * rng.standard_normal()
        noise = asymmetry * config.bump_amplitude * rng.standard_normal(2)
        amplitudes[f"{site}_l"] = float(amplitude + noise[0])
        amplitudes[f"{site}_r"] = float(amplitude + noise[1])
    for site, (az, el) in MIDDLE_SITES.items():
        d_el = config.site_jitter_deg * rng.standard_normal()
        directions[site] = site_direction(az, el + d_el)
        amplitudes[site] = float(SITE_PRIOR.get(site, 0.0) + config.bump_amplitude * rng.standard_normal())
    return axes, directions, amplitudes


def generate_subject(
    seed: int,
    asymmetry: Optional[float] = None,
    config: Optional[SyntheticConfig] = None,
    with_meshes: bool = True,
) -> SyntheticSubject:
    """
    Build a procedural subject.

    Args:
        seed: Identity seed; equal seeds give identical parameters
        asymmetry: Asymmetry level; ``config.asymmetry`` when None
        config: Generator settings
        with_meshes: Also extract the neutral mesh and build the registered mesh

    Returns:
        SyntheticSubject: Analytic shape, ground truth and meshes
    """
    config = config or SyntheticConfig()
    asymmetry = config.asymmetry if asymmetry is None else float(asymmetry)
    axes, directions, amplitudes = _sample_parameters(seed, asymmetry, config)
    subject = SyntheticSubject(seed, asymmetry, axes, directions, amplitudes, config.bump_width)
    if with_meshes:
        result = extract_mesh(subject.sdf, config.bbox, config.mesh_resolution)
        subject.neutral = TriMesh(result.mesh.vertices, result.mesh.faces, front_labels(result.mesh.vertices))
        unit, faces, landmark_indices = registered_topology(config.registered_subdivisions)
        vertices = subject.surface_points(unit)
        subject.registered = TriMesh(vertices, faces, front_labels(vertices))
        subject.landmark_indices = landmark_indices
        logger.debug("Subject %d: %d neutral vertices", seed, subject.neutral.num_vertices)
    return subject
