"""
Similarity transforms and closed-form least-squares alignment.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import DegenerateInputError, DimensionMismatchError

logger = logging.getLogger(__name__)

# Relative singular-value floor of the centred source below which correspondences are degenerate.
RANK_TOLERANCE = 1e-9


@dataclass
class SimilarityTransform:
    """
    ``x -> scale * rotation @ x + translation``.
    """

    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.scale = float(self.scale)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.scale <= 0.0:
            raise ValueError(f"Similarity scale must be positive, got {self.scale}")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    @classmethod
    def from_rotvec(cls, scale: float, rotvec: np.ndarray, translation: np.ndarray) -> "SimilarityTransform":
        return cls(scale, Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix(), translation)

    @property
    def rotvec(self) -> np.ndarray:
        return Rotation.from_matrix(self.rotation).as_rotvec()

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return self.scale * points @ self.rotation.T + self.translation

    def apply_vectors(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors (normals); scale and translation do not apply."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> "SimilarityTransform":
        rotation = self.rotation.T
        return SimilarityTransform(1.0 / self.scale, rotation, -(rotation @ self.translation) / self.scale)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ other``: apply ``other`` first."""
        return SimilarityTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
        )

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.scale * self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def to_dict(self) -> Dict:
        return {"scale": self.scale, "rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "SimilarityTransform":
        return cls(data["scale"], data["rotation"], data["translation"])


def umeyama_align(src: np.ndarray, dst: np.ndarray, with_scale: bool = True) -> SimilarityTransform:
    """
    Least-squares similarity mapping ``src`` onto ``dst``.

    Minimises ``sum_i ||s R src_i + t - dst_i||^2`` in closed form through
    the SVD of the cross-covariance, with a reflection correction so that
    ``det R = +1``.

    Args:
        src: Source points (N, 3)
        dst: Corresponding target points (N, 3)
        with_scale: Estimate the scale; otherwise it is fixed to 1

    Returns:
        SimilarityTransform: The optimal transform

    Raises:
        DegenerateInputError: Fewer than three points, collinear sources or a rank-deficient cross-covariance
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 3:
        raise DimensionMismatchError("source points", "(N, 3)", src.shape)
    if dst.shape != src.shape:
        raise DimensionMismatchError("target points", src.shape, dst.shape)
    if len(src) < 3:
        raise DegenerateInputError(f"Similarity alignment needs at least 3 correspondences, got {len(src)}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    src_c = src - mu_src
    dst_c = dst - mu_dst
    spread = np.linalg.svd(src_c, compute_uv=False)
    if spread[0] <= 0.0 or spread[1] <= RANK_TOLERANCE * spread[0]:
        raise DegenerateInputError("Correspondences are collinear or coincident; the alignment is not unique")

    covariance = dst_c.T @ src_c / len(src)
    u, d, vt = np.linalg.svd(covariance)
    if d[0] <= 0.0 or d[1] <= RANK_TOLERANCE * d[0]:
        raise DegenerateInputError("Cross-covariance is rank deficient; the rotation is not unique")
    signs = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0.0:
        signs[-1] = -1.0
    rotation = u @ np.diag(signs) @ vt
    if with_scale:
        variance = np.sum(src_c * src_c) / len(src)
        scale = float(np.sum(d * signs) / variance)
    else:
        scale = 1.0
    translation = mu_dst - scale * rotation @ mu_src
    return SimilarityTransform(scale, rotation, translation)


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrices, (3,) -> (3, 3) or (N, 3) -> (N, 3, 3)."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def rotation_right_jacobian(rotvec: np.ndarray) -> np.ndarray:
    """
    Right Jacobian of the rotation-vector parametrisation, so that
    ``R(w + dw) ≈ R(w) exp([J_r(w) dw]x)``.
    """
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = float(np.linalg.norm(rotvec))
    k = skew(rotvec)
    if theta < 1e-6:
        return np.eye(3) - 0.5 * k + k @ k / 6.0
    return (
        np.eye(3)
        - (1.0 - np.cos(theta)) / theta ** 2 * k
        + (theta - np.sin(theta)) / theta ** 3 * (k @ k)
    )


def rotvec_backward(rotvec: np.ndarray, rotation_bar: np.ndarray) -> np.ndarray:
    """
    Chain a cotangent of the rotation matrix into the rotation vector.

    Uses ``dR = R [J_r dw]x``; with ``M = R^T R_bar`` the result is
    ``J_r^T (M21 - M12, M02 - M20, M10 - M01)``.
    """
    rotation = Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix()
    m = rotation.T @ np.asarray(rotation_bar, dtype=np.float64)
    vee = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    return rotation_right_jacobian(rotvec).T @ vee
