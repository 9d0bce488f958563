"""
Latent Code Fitting

Codes are fitted to an observed point cloud by Adam. Every iteration
subsamples the observation, maps the points into canonical space with the
root finder and penalises ``|F_id(x_c)|``; the codes are regularised with
squared norms and, during the first half, with the symmetry penalty of
partner latents. Gradients through ``x_c`` use the implicit form of the
root finder.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..core.optim import Adam, LRSchedule
from ..errors import DegenerateInputError, FittingError, NonFiniteError
from ..fields.expression import DeformationField, ExpressionCode
from ..fields.identity import EnsembleField, IdentityCode, symmetry_penalty
from ..fields.layout import TRACKING_LANDMARKS, AnchorLayout
from ..geometry.extraction import DEFAULT_BBOX, extract_mesh
from ..geometry.mesh import OrientedPointCloud, TriMesh
from ..utils.rng import make_rng
from .root_finding import implicit_backward, root_find_canonical

logger = logging.getLogger(__name__)


@dataclass
class FitConfig:
    """
    Attributes:
        iterations: Adam iterations
        lr: Initial learning rate
        lr_events: ``(iteration, factor)`` learning-rate decays
        lambda_glob: Global latent regulariser
        lambda_loc: Local latent regulariser
        lambda_ex: Expression latent regulariser
        lambda_sym: Symmetry regulariser, active during the first ``sym_fraction`` of the iterations
        sym_fraction: Share of the iterations with the symmetry regulariser
        reg_events: Iterations at which the identity regularisers are divided
        reg_divisor: Divisor applied at every reg event
        lambda_normal: Weight of the normal agreement term (0 disables)
        lambda_landmark: Weight of the L1 landmark term
        points_per_step: Observation points per iteration
        root_max_iters: Newton iteration cap of the root finder
        root_tol: Root-finder residual tolerance
        root_damping: Root-finder step damping
        max_failure_fraction: Largest tolerated share of failed root finds per iteration
        use_deformation: Map observations through the deformation; off fits the neutral field directly
        seed: Seed of the subsampling
        progress: Show a progress bar
    """

    iterations: int = 700
    lr: float = 0.01
    lr_events: List[Tuple[int, float]] = field(default_factory=lambda: [(200, 0.1), (350, 0.1), (500, 0.1)])
    lambda_glob: float = 0.05
    lambda_loc: float = 0.05
    lambda_ex: float = 0.003
    lambda_sym: float = 1.0
    sym_fraction: float = 0.5
    reg_events: List[int] = field(default_factory=lambda: [200, 500])
    reg_divisor: float = 5.0
    lambda_normal: float = 0.0
    lambda_landmark: float = 1.0
    points_per_step: int = 2000
    root_max_iters: int = 10
    root_tol: float = 1e-5
    root_damping: float = 0.5
    max_failure_fraction: float = 0.5
    use_deformation: bool = True
    seed: int = 0
    progress: bool = False

    def __post_init__(self):
        for name in ("lambda_glob", "lambda_loc", "lambda_ex", "lambda_sym", "lambda_normal", "lambda_landmark"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be non-negative, got {self.iterations}")

    def identity_weights(self, iteration: int) -> Tuple[float, float]:
        """``(lambda_glob, lambda_loc)`` at an iteration."""
        divisions = sum(1 for event in self.reg_events if iteration >= event)
        factor = self.reg_divisor ** -divisions
        return self.lambda_glob * factor, self.lambda_loc * factor

    def symmetry_weight(self, iteration: int) -> float:
        return self.lambda_sym if iteration < self.sym_fraction * self.iterations else 0.0


@dataclass
class FitResult:
    """
    Attributes:
        identity: Fitted identity code with anchors
        expression: Fitted expression code
        history: One row per iteration with the loss terms and failure counts
        non_converged: Failed root finds per iteration
    """

    identity: IdentityCode
    expression: ExpressionCode
    history: List[Dict[str, float]] = field(default_factory=list)
    non_converged: List[int] = field(default_factory=list)

    @property
    def final_loss(self) -> Optional[float]:
        return self.history[-1]["loss"] if self.history else None

    def to_dict(self) -> Dict:
        return {
            "identity": self.identity.to_dict(),
            "expression": self.expression.to_dict(),
            "final_loss": self.final_loss,
            "non_converged": self.non_converged,
        }


@dataclass
class ObservationTerms:
    """
    Data terms of one observation and their cotangents.

    Attributes:
        value: Weighted sum of the data terms
        terms: Per-term values
        z_glob: Cotangent of the global latent
        z_loc: Cotangent of the local latents
        z_ex: Cotangent of the expression latent
        points: Cotangent of the (posed) observation points (N, 3)
        landmarks: Cotangent of the (posed) landmark targets (L, 3), when given
        failed: Failed root finds
    """

    value: float
    terms: Dict[str, float]
    z_glob: np.ndarray
    z_loc: np.ndarray
    z_ex: np.ndarray
    points: np.ndarray
    landmarks: Optional[np.ndarray]
    failed: int


def landmark_rows(layout: AnchorLayout, names: Sequence[str] = TRACKING_LANDMARKS) -> Optional[np.ndarray]:
    """Anchor rows of named landmarks, or None if the layout lacks any of them."""
    if not all(name in layout.names for name in names):
        return None
    return np.array([layout.index(name) for name in names], dtype=np.int64)


def check_observation(observation: OrientedPointCloud) -> None:
    observation.require_non_empty("observation")
    if not np.all(np.isfinite(observation.points)) or not np.all(np.isfinite(observation.normals)):
        raise NonFiniteError("Observation contains non-finite points or normals")


def observation_terms(
    field_: EnsembleField,
    defo: Optional[DeformationField],
    z_glob: np.ndarray,
    z_loc: np.ndarray,
    z_ex: np.ndarray,
    points: np.ndarray,
    normals: Optional[np.ndarray],
    config: FitConfig,
    landmarks: Optional[np.ndarray] = None,
    rows: Optional[np.ndarray] = None,
) -> ObservationTerms:
    """
    ``mean |F_id(x_c)|`` plus the optional normal and landmark terms, with
    cotangents of the codes and of the posed inputs.

    Raises:
        FittingError: More than ``max_failure_fraction`` of the root finds failed
    """
    anchors = field_.predict_anchors(z_glob)
    code = IdentityCode(z_glob, z_loc, anchors)
    deform = config.use_deformation and defo is not None
    n = len(points)
    z_ex_bar = np.zeros_like(z_ex)
    points_bar = np.zeros_like(points)
    summary = None
    failed = 0

    if deform:
        summary = defo.project(code)
        found = root_find_canonical(defo, points, z_ex, summary, config.root_max_iters, config.root_tol, config.root_damping)
        failed = found.num_failed
        if failed > config.max_failure_fraction * n:
            raise FittingError(f"{failed} of {n} root finds failed (limit {config.max_failure_fraction:.0%})")
        mask = found.converged
        x_c = found.x_c[mask]
    else:
        mask = np.ones(n, dtype=bool)
        x_c = points

    m = max(len(x_c), 1)
    use_normals = config.lambda_normal > 0.0 and normals is not None
    evaluation = field_.forward(code, x_c, with_gradient=use_normals)
    terms = {"surface": float(np.sum(np.abs(evaluation.values))) / m}
    value_bar = np.sign(evaluation.values) / m
    gradient_bar = None
    if use_normals:
        n_obs = normals[mask]
        if deform:
            # Normals pulled back through the deformation, held fixed.
            n_obs = np.einsum("nji,nj->ni", found.jacobian[mask], n_obs)
            n_obs /= np.maximum(np.linalg.norm(n_obs, axis=1, keepdims=True), 1e-12)
        terms["normal"] = config.lambda_normal * float(np.sum(1.0 - np.sum(evaluation.gradients * n_obs, axis=1))) / m
        gradient_bar = -config.lambda_normal * n_obs / m
    _, grads = field_.backward(code, evaluation, value_bar, gradient_bar, need_params=False)
    z_glob_bar = grads.z_glob.copy()
    z_loc_bar = grads.z_loc.copy()
    anchors_bar = grads.anchors.copy()
    summary_bar = np.zeros(defo.config.d_id_ex) if deform else None

    if deform:
        implicit = implicit_backward(defo, x_c, found.jacobian[mask], z_ex, summary, grads.points)
        points_bar[mask] = implicit.x_p
        z_ex_bar += implicit.z_ex
        summary_bar += implicit.summary
    else:
        points_bar = grads.points

    landmarks_bar = None
    if landmarks is not None and rows is not None and config.lambda_landmark > 0.0:
        a = anchors[rows]
        if deform:
            moved = defo.forward(a, z_ex, summary)
            posed = a + moved.displacements
        else:
            posed = a
        residual = posed - landmarks
        count = max(len(rows), 1)
        terms["landmark"] = config.lambda_landmark * float(np.sum(np.abs(residual))) / count
        posed_bar = config.lambda_landmark * np.sign(residual) / count
        landmarks_bar = -posed_bar
        a_bar = posed_bar.copy()
        if deform:
            _, x_bar, ex_bar, s_bar = defo.backward(moved, posed_bar, need_params=False)
            a_bar += x_bar
            z_ex_bar += ex_bar
            summary_bar += s_bar
        np.add.at(anchors_bar, rows, a_bar)

    if deform:
        _, projected = defo.project_backward(code, summary_bar)
        z_glob_bar += projected.z_glob
        z_loc_bar += projected.z_loc
        anchors_bar += projected.anchors
    _, from_anchors = field_.anchor_backward(z_glob, anchors_bar, need_params=False)
    z_glob_bar += from_anchors
    return ObservationTerms(sum(terms.values()), terms, z_glob_bar, z_loc_bar, z_ex_bar, points_bar, landmarks_bar, failed)


def subsample(points: np.ndarray, normals: np.ndarray, n: int, rng: np.random.Generator):
    if n <= 0 or n >= len(points):
        return points, normals
    index = np.sort(rng.choice(len(points), size=n, replace=False))
    return points[index], normals[index]


def _fit(
    field_: EnsembleField,
    defo: Optional[DeformationField],
    observation: OrientedPointCloud,
    config: FitConfig,
    identity: Optional[IdentityCode],
    fit_identity: bool,
    expression: Optional[ExpressionCode],
    fit_expression: bool,
    landmarks: Optional[np.ndarray] = None,
    desc: str = "fit",
) -> FitResult:
    check_observation(observation)
    cfg = field_.config
    z_glob = np.zeros(cfg.d_glob) if identity is None else identity.z_glob.astype(np.float64).copy()
    z_loc = np.zeros((cfg.num_anchors + 1, cfg.d_loc)) if identity is None else identity.z_loc.astype(np.float64).copy()
    d_ex = defo.config.d_ex if defo is not None else 0
    z_ex = np.zeros(d_ex) if expression is None else expression.z_ex.astype(np.float64).copy()

    rows = None
    if landmarks is not None:
        rows = landmark_rows(field_.layout)
        if rows is None:
            logger.warning("Anchor layout lacks the tracking landmarks; landmark term disabled")

    opt = Adam()
    schedule = LRSchedule(config.lr, [tuple(e) for e in config.lr_events])
    if fit_identity:
        opt.add_group("identity", [z_glob, z_loc], schedule)
    if fit_expression and d_ex:
        opt.add_group("expression", [z_ex], schedule)

    result = FitResult(IdentityCode(z_glob, z_loc), ExpressionCode(z_ex))
    symmetric = cfg.share_symmetric
    for it in tqdm(range(config.iterations), desc=desc, disable=not config.progress):
        rng = make_rng(config.seed, desc, it)
        points, normals = subsample(observation.points, observation.normals, config.points_per_step, rng)
        obs = observation_terms(field_, defo, z_glob, z_loc, z_ex, points, normals, config, landmarks, rows)
        terms = dict(obs.terms)
        grads: Dict[str, List[np.ndarray]] = {}
        if fit_identity:
            lam_glob, lam_loc = config.identity_weights(it)
            terms["reg_glob"] = lam_glob * float(np.dot(z_glob, z_glob))
            terms["reg_loc"] = lam_loc * float(np.sum(z_loc * z_loc))
            g_glob = obs.z_glob + 2.0 * lam_glob * z_glob
            g_loc = obs.z_loc + 2.0 * lam_loc * z_loc
            lam_sym = config.symmetry_weight(it) if symmetric else 0.0
            if lam_sym > 0.0:
                s_value, s_grad = symmetry_penalty(field_.layout, z_loc)
                terms["symmetry"] = lam_sym * s_value
                g_loc = g_loc + lam_sym * s_grad
            grads["identity"] = [g_glob, g_loc]
        if fit_expression and d_ex:
            terms["reg_ex"] = config.lambda_ex * float(np.dot(z_ex, z_ex))
            grads["expression"] = [obs.z_ex + 2.0 * config.lambda_ex * z_ex]
        loss = sum(terms.values())
        row = {"iteration": it, "loss": loss, "failed": obs.failed}
        row.update(terms)
        result.history.append(row)
        result.non_converged.append(obs.failed)
        if grads:
            opt.step(grads)

    result.identity = field_.complete(IdentityCode(z_glob, z_loc))
    result.expression = ExpressionCode(z_ex)
    if result.history:
        logger.info("%s: final loss %.6g after %d iterations", desc, result.final_loss, config.iterations)
    return result


def fit_identity_code(
    field_: EnsembleField,
    defo: Optional[DeformationField],
    observed: OrientedPointCloud,
    config: Optional[FitConfig] = None,
    landmarks: Optional[np.ndarray] = None,
) -> FitResult:
    """
    Fit identity and expression codes to a (nominally neutral) observation.

    Args:
        field_: Trained identity field
        defo: Trained deformation field; None fits the neutral field directly
        observed: Observation in canonical coordinates
        config: Fitting settings
        landmarks: Optional tracking landmarks (8, 3) supervising the predicted anchors

    Returns:
        FitResult

    Raises:
        DegenerateInputError: Empty observation
        NonFiniteError: Non-finite observation
        FittingError: Too many failed root finds
    """
    config = config or FitConfig()
    return _fit(field_, defo, observed, config, None, True, None, defo is not None, landmarks, desc="fit-identity")


def fit_expression_codes(
    field_: EnsembleField,
    defo: DeformationField,
    identity: IdentityCode,
    observations: Sequence[OrientedPointCloud],
    config: Optional[FitConfig] = None,
) -> List[FitResult]:
    """
    Fit one expression code per observation with the identity held fixed.
    """
    config = config or FitConfig()
    results = []
    for index, observation in enumerate(observations):
        results.append(_fit(field_, defo, observation, config, identity, False, None, True, desc=f"fit-expression-{index}"))
    return results


def fit_joint_single(
    field_: EnsembleField,
    defo: DeformationField,
    observation: OrientedPointCloud,
    config: Optional[FitConfig] = None,
    landmarks: Optional[np.ndarray] = None,
) -> FitResult:
    """Fit both codes to a single observation of arbitrary expression."""
    config = config or FitConfig()
    return _fit(field_, defo, observation, config, None, True, None, True, landmarks, desc="fit-joint")


def reconstruct_mesh(
    field_: EnsembleField,
    identity: IdentityCode,
    defo: Optional[DeformationField] = None,
    expression: Optional[ExpressionCode] = None,
    resolution: int = 128,
    bbox=DEFAULT_BBOX,
    chunk: int = 32768,
) -> TriMesh:
    """
    Extract the canonical surface of ``identity`` and warp it forward.

    Vertices are moved by the deformation field when both ``defo`` and
    ``expression`` are given; faces are unchanged, so canonical and posed
    meshes stay in vertex correspondence.

    Raises:
        DegenerateInputError: The field has no zero crossing in the box
    """
    code = identity if identity.anchors is not None else field_.complete(identity)
    result = extract_mesh(lambda x: field_.forward(code, x, with_gradient=False).values, bbox, resolution, chunk)
    if result.empty:
        raise DegenerateInputError("The identity field has no surface inside the extraction box")
    mesh = result.mesh
    if defo is not None and expression is not None:
        summary = defo.project(code)
        moved = np.concatenate([
            defo.forward(mesh.vertices[s:s + chunk], expression.z_ex, summary).displacements
            for s in range(0, mesh.num_vertices, chunk)
        ])
        mesh = mesh.with_vertices(mesh.vertices + moved)
    return mesh
