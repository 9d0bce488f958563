"""
Inverting the forward deformation.

``root_find_canonical`` solves ``x_c + delta(x_c) = x_p`` per point with a
damped Newton iteration started at ``x_c = x_p``. Gradients of losses on the
solution never differentiate through the iterations: at a converged point
the implicit function theorem gives ``dx_c = J^-1 (dx_p - d(delta)/d(theta) d(theta))``,
which ``implicit_backward`` applies with a single reverse pass of the
deformation network.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core.dense import NetGrads
from ..errors import NonFiniteError
from ..fields.expression import DeformationField

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 10
DEFAULT_TOL = 1e-5
DEFAULT_DAMPING = 0.5
MAX_HALVINGS = 6
SINGULAR_DET = 1e-12


@dataclass
class RootFindResult:
    """
    Attributes:
        x_c: Canonical points (N, 3)
        converged: Residual within tolerance (N,)
        residual: Final residual norm (N,)
        jacobian: Jacobian of the posed-point map at ``x_c`` (N, 3, 3)
        iterations: Newton iterations run
    """

    x_c: np.ndarray
    converged: np.ndarray
    residual: np.ndarray
    jacobian: np.ndarray
    iterations: int

    @property
    def num_failed(self) -> int:
        return int(np.count_nonzero(~self.converged))


def _residual(defo: DeformationField, x: np.ndarray, x_p: np.ndarray, z_ex: np.ndarray, summary: np.ndarray) -> np.ndarray:
    evaluation = defo.forward(x, z_ex, summary)
    return np.linalg.norm(x + evaluation.displacements - x_p, axis=1)


def root_find_canonical(
    defo: DeformationField,
    x_p: np.ndarray,
    z_ex: np.ndarray,
    summary: np.ndarray,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    damping: float = DEFAULT_DAMPING,
) -> RootFindResult:
    """
    Canonical pre-images of posed points.

    Args:
        defo: Deformation field
        x_p: Posed points (N, 3)
        z_ex: Expression latent
        summary: Identity summary
        max_iters: Newton iteration cap
        tol: Residual tolerance
        damping: Step factor applied while a step increases the residual

    Returns:
        RootFindResult
    """
    x_p = np.asarray(x_p, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(x_p)):
        raise NonFiniteError("Non-finite posed points")
    x = x_p.copy()
    iterations = 0
    for iterations in range(1, max_iters + 1):
        evaluation = defo.forward(x, z_ex, summary, with_jacobian=True)
        r = x + evaluation.displacements - x_p
        norm = np.linalg.norm(r, axis=1)
        active = norm > tol
        if not active.any():
            iterations -= 1
            break
        jac = evaluation.jacobians
        solvable = active & (np.abs(np.linalg.det(jac)) > SINGULAR_DET)
        if not solvable.any():
            break
        idx = np.flatnonzero(solvable)
        step = np.linalg.solve(jac[idx], r[idx][:, :, None])[:, :, 0]
        candidate = x[idx] - step
        new_norm = _residual(defo, candidate, x_p[idx], z_ex, summary)
        factor = 1.0
        for _ in range(MAX_HALVINGS):
            worse = new_norm > norm[idx]
            if not worse.any():
                break
            factor *= damping
            candidate[worse] = x[idx][worse] - factor * step[worse]
            new_norm[worse] = _residual(defo, candidate[worse], x_p[idx][worse], z_ex, summary)
        # Rows still worse after the last halving stay put and end non-converged.
        improved = new_norm <= norm[idx]
        if not improved.any():
            break
        x[idx[improved]] = candidate[improved]

    final = defo.forward(x, z_ex, summary, with_jacobian=True)
    residual = np.linalg.norm(x + final.displacements - x_p, axis=1)
    converged = residual <= tol
    if not converged.all():
        logger.debug("Root finding: %d of %d points did not converge", int((~converged).sum()), len(x))
    return RootFindResult(x, converged, residual, final.jacobians, iterations)


@dataclass
class ImplicitGrads:
    """
    Attributes:
        x_p: Cotangent of the posed points (N, 3)
        z_ex: Cotangent of the expression latent
        summary: Cotangent of the identity summary
        net_grads: Deformation-network gradients, when requested
    """

    x_p: np.ndarray
    z_ex: np.ndarray
    summary: np.ndarray
    net_grads: Optional[NetGrads] = None


def implicit_backward(
    defo: DeformationField,
    x_c: np.ndarray,
    jacobian: np.ndarray,
    z_ex: np.ndarray,
    summary: np.ndarray,
    x_c_bar: np.ndarray,
    need_params: bool = False,
) -> ImplicitGrads:
    """
    Chain a cotangent of converged canonical points into the posed points,
    the codes and (optionally) the network.

    Args:
        defo: Deformation field
        x_c: Converged canonical points (N, 3)
        jacobian: Jacobians at ``x_c`` (N, 3, 3)
        z_ex: Expression latent
        summary: Identity summary
        x_c_bar: Cotangent of ``x_c`` (N, 3)
        need_params: Also return network gradients

    Returns:
        ImplicitGrads
    """
    x_c_bar = np.asarray(x_c_bar, dtype=np.float64).reshape(-1, 3)
    if len(x_c_bar) == 0:
        return ImplicitGrads(np.zeros((0, 3)), np.zeros_like(np.asarray(z_ex, dtype=np.float64)), np.zeros_like(np.asarray(summary, dtype=np.float64)))
    y = np.linalg.solve(np.swapaxes(jacobian, 1, 2), x_c_bar[:, :, None])[:, :, 0]
    evaluation = defo.forward(x_c, z_ex, summary)
    grads, _, z_ex_bar, summary_bar = defo.backward(evaluation, -y, need_params=need_params)
    return ImplicitGrads(y, z_ex_bar, summary_bar, grads)
