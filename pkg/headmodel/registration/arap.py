"""
As-rigid-as-possible fine-tuning.

Per-vertex offsets are optimised with L-BFGS against the filtered
point-to-plane distance to the scan plus an ARAP term over the one-ring
edges. Per-vertex rotations are solved in closed form between L-BFGS rounds,
and correspondences are refreshed at the start of every round. The ARAP
weight decays with the cumulative L-BFGS iteration count down to a floor.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..core.lbfgs import lbfgs_minimize
from ..geometry.mesh import OrientedPointCloud, TriMesh
from .distance import ScanTarget, charbonnier, charbonnier_grad, filtered_p2p
from .template import RegistrationConfig

logger = logging.getLogger(__name__)

# Energies may rise by this relative amount between accepted iterations before an error is logged.
ENERGY_TOLERANCE = 1e-9


@dataclass
class ARAPResult:
    """
    Attributes:
        mesh: Registered mesh (template topology, deformed vertices)
        offsets: Per-vertex offsets (N, 3)
        rotations: Per-vertex rotations (N, 3, 3)
        round_energies: Per round, the objective at the start and after every accepted L-BFGS iteration
        lambdas: ARAP weight used in each round
        round_iterations: L-BFGS iterations run in each round
        isolated: Vertices without an ARAP term
    """

    mesh: TriMesh
    offsets: np.ndarray
    rotations: np.ndarray
    round_energies: List[List[float]] = field(default_factory=list)
    lambdas: List[float] = field(default_factory=list)
    round_iterations: List[int] = field(default_factory=list)
    isolated: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def energies(self) -> List[float]:
        return [value for values in self.round_energies for value in values]


def one_ring_edges(mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    Directed one-ring edges and the vertices that lack a usable neighbourhood.

    Returns:
        Tuple of directed edges (E, 2) ``(v, u)`` with u in N(v), and the
        indices of vertices with fewer than two neighbours
    """
    undirected = mesh.edges
    directed = np.concatenate([undirected, undirected[:, ::-1]])
    degree = np.bincount(directed[:, 0], minlength=mesh.num_vertices)
    isolated = np.flatnonzero(degree < 2)
    if len(isolated):
        directed = directed[~np.isin(directed[:, 0], isolated)]
    return directed, isolated


def fit_rotations(rest: np.ndarray, deformed: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """
    Closed-form per-vertex rotations ``argmin_R sum_u ||R (v - u) - (v' - u')||^2``.

    Reflections are corrected by flipping the singular vector of the
    smallest singular value.
    """
    n = len(rest)
    e = rest[edges[:, 0]] - rest[edges[:, 1]]
    e_hat = deformed[edges[:, 0]] - deformed[edges[:, 1]]
    covariance = np.zeros((n, 3, 3))
    np.add.at(covariance, edges[:, 0], e[:, :, None] * e_hat[:, None, :])
    u, _, vt = np.linalg.svd(covariance)
    rotations = np.swapaxes(vt, 1, 2) @ np.swapaxes(u, 1, 2)
    reflected = np.linalg.det(rotations) < 0.0
    if reflected.any():
        u_fix = u[reflected].copy()
        u_fix[:, :, -1] *= -1.0
        rotations[reflected] = np.swapaxes(vt[reflected], 1, 2) @ np.swapaxes(u_fix, 1, 2)
    return rotations


def arap_energy(rest: np.ndarray, deformed: np.ndarray, edges: np.ndarray, rotations: Optional[np.ndarray] = None) -> float:
    """
    Unweighted ARAP energy ``sum_(v,u) ||R_v (v - u) - (v' - u')||^2``; the
    optimal rotations are used when none are given.
    """
    if rotations is None:
        rotations = fit_rotations(rest, deformed, edges)
    e = rest[edges[:, 0]] - rest[edges[:, 1]]
    e_hat = deformed[edges[:, 0]] - deformed[edges[:, 1]]
    r = e_hat - np.einsum("eij,ej->ei", rotations[edges[:, 0]], e)
    return float(np.sum(r * r))


def _round_objective(rest, edges, rotations, weight, active, scan_points, scan_normals, eps):
    def objective(x: np.ndarray):
        deformed = rest + x.reshape(-1, 3)
        e = rest[edges[:, 0]] - rest[edges[:, 1]]
        e_hat = deformed[edges[:, 0]] - deformed[edges[:, 1]]
        r = e_hat - np.einsum("eij,ej->ei", rotations[edges[:, 0]], e)
        grad = np.zeros_like(deformed)
        np.add.at(grad, edges[:, 0], 2.0 * weight * r)
        np.add.at(grad, edges[:, 1], -2.0 * weight * r)
        residual = np.where(active, np.sum((deformed - scan_points) * scan_normals, axis=1), 0.0)
        value = weight * float(np.sum(r * r)) + float(np.sum(charbonnier(residual, eps)))
        grad += charbonnier_grad(residual, eps)[:, None] * scan_normals
        return value, grad.ravel()

    return objective


def arap_register(mesh: TriMesh, scan: OrientedPointCloud, config: Optional[RegistrationConfig] = None) -> ARAPResult:
    """
    Deform ``mesh`` onto ``scan`` with ARAP regularisation.

    Args:
        mesh: Template mesh aligned to the scan
        scan: Oriented scan points
        config: ARAP schedule and correspondence filters

    Returns:
        ARAPResult: Registered mesh, offsets, rotations and energy history
    """
    config = config or RegistrationConfig()
    mesh.require_non_empty("template mesh")
    target = ScanTarget(scan)
    rest = mesh.vertices
    edges, isolated = one_ring_edges(mesh)
    if len(isolated):
        logger.warning("%d vertices have fewer than two neighbours; they keep only the data term", len(isolated))

    offsets = np.zeros_like(rest)
    rotations = np.broadcast_to(np.eye(3), (len(rest), 3, 3)).copy()
    round_energies: List[List[float]] = []
    lambdas: List[float] = []
    round_iterations: List[int] = []
    cumulative = 0
    for round_index in range(config.arap_rounds):
        weight = max(config.arap_lambda_start * config.arap_decay ** cumulative, config.arap_lambda_floor)
        lambdas.append(weight)
        deformed = rest + offsets
        if round_index > 0:
            rotations = fit_rotations(rest, deformed, edges)
        normals = mesh.with_vertices(deformed).vertex_normals
        p2p = filtered_p2p(deformed, normals, target, config.max_distance, config.min_cosine)
        scan_points = target.scan.points[p2p.nn_index]
        scan_normals = target.scan.normals[p2p.nn_index]
        objective = _round_objective(rest, edges, rotations, weight, p2p.active, scan_points, scan_normals, config.data_eps)
        result = lbfgs_minimize(objective, offsets.ravel(), max_iters=config.arap_inner_iterations, tol=1e-10)
        for before, after in zip(result.values[:-1], result.values[1:]):
            if after > before * (1.0 + ENERGY_TOLERANCE) + ENERGY_TOLERANCE:
                logger.error("ARAP energy increased within round %d: %.9g -> %.9g", round_index, before, after)
        round_energies.append(list(result.values))
        round_iterations.append(result.iterations)
        offsets = result.x.reshape(-1, 3)
        cumulative += result.iterations
        logger.debug(
            "ARAP round %d: lambda %.4g, %d active, energy %.6g, %d iterations",
            round_index, weight, int(p2p.active.sum()), result.value, result.iterations,
        )
        if result.iterations == 0 and round_index > 0:
            break

    rotations = fit_rotations(rest, rest + offsets, edges)
    return ARAPResult(mesh.with_vertices(rest + offsets), offsets, rotations, round_energies, lambdas, round_iterations, isolated)
