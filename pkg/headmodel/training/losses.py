"""
Training losses.

``igr_terms`` scores raw SDF values and spatial gradients, so any evaluator
can be checked against it; ``loss_igr`` runs it on the identity field and
chains the cotangents back into networks and codes.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..core.dense import NetGrads
from ..errors import DivergenceError
from ..fields.identity import CodeGrads, EnsembleField, IdentityCode

logger = logging.getLogger(__name__)


@dataclass
class IGRWeights:
    """
    Attributes:
        surface: Weight of |F| on the surface
        normal: Weight of 1 - <grad F, n> on the surface
        eikonal: Weight of (|grad F| - 1)^2 on all samples
        off_surface: Weight of exp(-alpha |F|) off the surface
        alpha: Decay of the off-surface penalty
    """

    surface: float = 2.0
    normal: float = 0.3
    eikonal: float = 0.1
    off_surface: float = 0.01
    alpha: float = 50.0

    def scaled(self, factor: float) -> "IGRWeights":
        return IGRWeights(self.surface * factor, self.normal * factor, self.eikonal * factor, self.off_surface * factor, self.alpha)


@dataclass
class IGRTerms:
    """
    Loss value, weighted per-term breakdown and cotangents of the inputs.
    """

    value: float
    terms: Dict[str, float]
    surface_value_bar: np.ndarray
    surface_gradient_bar: np.ndarray
    off_value_bar: np.ndarray
    off_gradient_bar: np.ndarray


def igr_terms(
    surface_values: np.ndarray,
    surface_gradients: np.ndarray,
    normals: np.ndarray,
    off_values: np.ndarray,
    off_gradients: np.ndarray,
    weights: Optional[IGRWeights] = None,
) -> IGRTerms:
    """
    Implicit geometric regularisation loss on precomputed values.

    Each term is a mean over its samples; the eikonal mean runs over the
    surface and off-surface samples together.

    Args:
        surface_values: F on surface samples (N,)
        surface_gradients: grad F on surface samples (N, 3)
        normals: Unit normals of the surface samples (N, 3)
        off_values: F on off-surface samples (M,)
        off_gradients: grad F on off-surface samples (M, 3)
        weights: Term weights

    Returns:
        IGRTerms
    """
    w = weights or IGRWeights()
    fs = np.asarray(surface_values, dtype=np.float64).reshape(-1)
    gs = np.asarray(surface_gradients, dtype=np.float64).reshape(-1, 3)
    ns = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    fo = np.asarray(off_values, dtype=np.float64).reshape(-1)
    go = np.asarray(off_gradients, dtype=np.float64).reshape(-1, 3)
    n_s, n_o = max(len(fs), 1), max(len(fo), 1)
    n_all = max(len(fs) + len(fo), 1)

    surface = w.surface * float(np.sum(np.abs(fs))) / n_s
    normal = w.normal * float(np.sum(1.0 - np.sum(gs * ns, axis=1))) / n_s
    norm_s = np.linalg.norm(gs, axis=1)
    norm_o = np.linalg.norm(go, axis=1)
    eikonal = w.eikonal * float(np.sum((norm_s - 1.0) ** 2) + np.sum((norm_o - 1.0) ** 2)) / n_all
    decay = np.exp(-w.alpha * np.abs(fo))
    off = w.off_surface * float(np.sum(decay)) / n_o

    def eikonal_bar(g, norm):
        safe = np.where(norm > 0.0, norm, 1.0)
        return (2.0 * w.eikonal / n_all) * ((norm - 1.0) / safe)[:, None] * g

    return IGRTerms(
        value=surface + normal + eikonal + off,
        terms={"surface": surface, "normal": normal, "eikonal": eikonal, "off_surface": off},
        surface_value_bar=np.sign(fs) * w.surface / n_s,
        surface_gradient_bar=-w.normal * ns / n_s + eikonal_bar(gs, norm_s),
        off_value_bar=-w.off_surface * w.alpha * np.sign(fo) * decay / n_o,
        off_gradient_bar=eikonal_bar(go, norm_o),
    )


@dataclass
class IGRLoss:
    value: float
    terms: Dict[str, float]
    net_grads: Optional[Dict[str, NetGrads]]
    code_grads: CodeGrads


def loss_igr(
    field: EnsembleField,
    code: IdentityCode,
    surface_points: np.ndarray,
    normals: np.ndarray,
    off_points: np.ndarray,
    weights: Optional[IGRWeights] = None,
    need_params: bool = True,
    batch: Optional[int] = None,
) -> IGRLoss:
    """
    IGR loss of the identity field for one code, with gradients.

    Args:
        field: Identity field
        code: Identity code with anchors
        surface_points: Surface samples (N, 3)
        normals: Their unit normals (N, 3)
        off_points: Off-surface samples (M, 3)
        weights: Term weights
        need_params: Accumulate network gradients
        batch: Batch index reported on divergence

    Returns:
        IGRLoss: Value, breakdown, network gradients and code cotangents

    Raises:
        DivergenceError: If the loss is not finite
    """
    surface_points = np.asarray(surface_points, dtype=np.float64).reshape(-1, 3)
    n = len(surface_points)
    points = np.concatenate([surface_points, np.asarray(off_points, dtype=np.float64).reshape(-1, 3)])
    evaluation = field.forward(code, points, with_gradient=True)
    terms = igr_terms(
        evaluation.values[:n], evaluation.gradients[:n], normals,
        evaluation.values[n:], evaluation.gradients[n:], weights,
    )
    if not np.isfinite(terms.value):
        raise DivergenceError("Non-finite IGR loss", batch=batch)
    value_bar = np.concatenate([terms.surface_value_bar, terms.off_value_bar])
    gradient_bar = np.concatenate([terms.surface_gradient_bar, terms.off_gradient_bar])
    net_grads, code_grads = field.backward(code, evaluation, value_bar, gradient_bar, need_params)
    return IGRLoss(terms.value, terms.terms, net_grads, code_grads)


def deformation_loss(predicted: np.ndarray, target: np.ndarray):
    """
    Mean squared displacement error ``mean ||pred - target||^2`` and its cotangent.
    """
    diff = np.asarray(predicted, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    n = max(len(diff), 1)
    return float(np.sum(diff * diff)) / n, 2.0 * diff / n
