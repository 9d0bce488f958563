"""
Filtered point-to-plane distance between a deforming surface and a scan.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from ..geometry.mesh import OrientedPointCloud
from ..geometry.neighbors import NNIndex

DEFAULT_MAX_DISTANCE = 0.02
DEFAULT_MIN_COSINE = 0.5


@dataclass
class P2PResult:
    """
    Attributes:
        distances: Filtered distances (N,); zero where filtered out
        signed: Signed point-to-plane residuals ``<v - s, n(s)>`` (N,)
        nn_index: Nearest scan point per query (N,)
        nn_distance: Euclidean distance to that point (N,)
        active: True where both filters pass (N,)
    """

    distances: np.ndarray
    signed: np.ndarray
    nn_index: np.ndarray
    nn_distance: np.ndarray
    active: np.ndarray


class ScanTarget:
    """A scan with its kd-tree, built once per registration."""

    def __init__(self, scan: OrientedPointCloud):
        scan.require_non_empty("scan")
        self.scan = scan
        self.index = NNIndex(scan.points)


def filtered_p2p(
    points: np.ndarray,
    normals: np.ndarray,
    target: Union[ScanTarget, OrientedPointCloud],
    max_distance: float = DEFAULT_MAX_DISTANCE,
    min_cosine: float = DEFAULT_MIN_COSINE,
) -> P2PResult:
    """
    Point-to-plane distance at the nearest scan point, filtered.

    A query contributes zero when its nearest scan point is farther than
    ``max_distance`` or when the cosine between its normal and the scan
    normal is below ``min_cosine``; otherwise it contributes
    ``|<v - s, n(s)>|``.

    Args:
        points: Query positions (N, 3)
        normals: Query unit normals (N, 3)
        target: Indexed scan
        max_distance: NN distance filter
        min_cosine: Normal agreement filter

    Returns:
        P2PResult: Filtered distances plus correspondences and the active mask
    """
    if isinstance(target, OrientedPointCloud):
        target = ScanTarget(target)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    idx, dist = target.index.query(points)
    scan_points = target.scan.points[idx]
    scan_normals = target.scan.normals[idx]
    signed = np.sum((points - scan_points) * scan_normals, axis=1)
    cosine = np.sum(normals * scan_normals, axis=1)
    active = (dist <= max_distance) & (cosine >= min_cosine)
    return P2PResult(np.where(active, np.abs(signed), 0.0), signed, idx, dist, active)


def charbonnier(r: np.ndarray, eps: float) -> np.ndarray:
    """Smooth absolute value ``sqrt(r^2 + eps^2) - eps``."""
    return np.sqrt(r * r + eps * eps) - eps


def charbonnier_grad(r: np.ndarray, eps: float) -> np.ndarray:
    return r / np.sqrt(r * r + eps * eps)
