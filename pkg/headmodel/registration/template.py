"""
Morphable Template Fitting

A linear morphable template (mean shape, identity and expression modes, one
hinge joint for the jaw) is fitted jointly to a subject's scans: identity
coefficients are shared, every scan gets its own expression coefficients,
jaw angle and rigid correction, and the scale is shared. The objective is
an L1 landmark term, a filtered point-to-plane data term and weighted
squared-norm regularisers, minimised with Adam.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.spatial.transform import Rotation
from tqdm import tqdm

from ..core.checkpoint import load_tensors, save_tensors
from ..core.optim import Adam, LRSchedule
from ..errors import CheckpointError, DimensionMismatchError, DivergenceError, NonFiniteError
from ..geometry.mesh import OrientedPointCloud, TriMesh
from .distance import ScanTarget, charbonnier, charbonnier_grad, filtered_p2p
from .similarity import SimilarityTransform, rotvec_backward, umeyama_align

logger = logging.getLogger(__name__)

NUM_LANDMARKS = 68


def hinge_transform(points: np.ndarray, pivot: np.ndarray, axis: np.ndarray, weights: np.ndarray, angle: float) -> np.ndarray:
    """
    Linear-blend skinning of a single hinge: each point moves towards its
    rotation by ``angle`` about ``axis`` through ``pivot`` in proportion to
    its weight.
    """
    rotation = Rotation.from_rotvec(float(angle) * np.asarray(axis, dtype=np.float64)).as_matrix()
    rotated = (points - pivot) @ rotation.T + pivot
    w = np.asarray(weights, dtype=np.float64)[:, None]
    return (1.0 - w) * points + w * rotated


@dataclass
class MorphableTemplate:
    """
    Attributes:
        mean: Mean mesh with front/back vertex labels
        id_basis: Identity modes (N, 3, D_id)
        ex_basis: Expression modes (N, 3, D_ex)
        hinge_pivot: Jaw pivot (3,)
        hinge_axis: Unit jaw axis (3,)
        hinge_weights: Skinning weights in [0, 1] (N,)
        landmark_indices: Vertex index of every landmark (68,)
    """

    mean: TriMesh
    id_basis: np.ndarray
    ex_basis: np.ndarray
    hinge_pivot: np.ndarray
    hinge_axis: np.ndarray
    hinge_weights: np.ndarray
    landmark_indices: np.ndarray

    def __post_init__(self):
        n = self.mean.num_vertices
        self.id_basis = np.asarray(self.id_basis, dtype=np.float64)
        self.ex_basis = np.asarray(self.ex_basis, dtype=np.float64)
        for name, basis in (("identity basis", self.id_basis), ("expression basis", self.ex_basis)):
            if basis.ndim != 3 or basis.shape[:2] != (n, 3):
                raise DimensionMismatchError(name, (n, 3, "D"), basis.shape)
        self.hinge_pivot = np.asarray(self.hinge_pivot, dtype=np.float64).reshape(3)
        axis = np.asarray(self.hinge_axis, dtype=np.float64).reshape(3)
        self.hinge_axis = axis / np.linalg.norm(axis)
        self.hinge_weights = np.asarray(self.hinge_weights, dtype=np.float64).reshape(-1)
        if self.hinge_weights.shape != (n,):
            raise DimensionMismatchError("hinge weights", (n,), self.hinge_weights.shape)
        if np.any((self.hinge_weights < 0.0) | (self.hinge_weights > 1.0)):
            raise ValueError("Hinge skinning weights must lie in [0, 1]")
        self.landmark_indices = np.asarray(self.landmark_indices, dtype=np.int64).reshape(-1)
        if np.any((self.landmark_indices < 0) | (self.landmark_indices >= n)):
            raise ValueError("Landmark vertex index out of range")

    @property
    def num_vertices(self) -> int:
        return self.mean.num_vertices

    @property
    def d_id(self) -> int:
        return self.id_basis.shape[2]

    @property
    def d_ex(self) -> int:
        return self.ex_basis.shape[2]

    def shape(self, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """Unposed vertices ``mean + B_id alpha + B_ex beta``."""
        return self.mean.vertices + self.id_basis @ np.asarray(alpha) + self.ex_basis @ np.asarray(beta)

    def articulate(self, vertices: np.ndarray, angle: float) -> np.ndarray:
        return hinge_transform(vertices, self.hinge_pivot, self.hinge_axis, self.hinge_weights, angle)

    def instance(self, alpha: np.ndarray, beta: np.ndarray, angle: float = 0.0, transform: Optional[SimilarityTransform] = None) -> TriMesh:
        vertices = self.articulate(self.shape(alpha, beta), angle)
        if transform is not None:
            vertices = transform.apply(vertices)
        return self.mean.with_vertices(vertices)

    def landmarks(self, vertices: np.ndarray) -> np.ndarray:
        return np.asarray(vertices)[self.landmark_indices]

    # -- persistence ----------------------------------------------------

    def state_dict(self) -> Dict[str, np.ndarray]:
        labels = self.mean.labels if self.mean.labels is not None else np.full(self.num_vertices, -1)
        return {
            "template/vertices": self.mean.vertices,
            "template/faces": self.mean.faces.astype(np.float64),
            "template/labels": np.asarray(labels, dtype=np.float64),
            "template/id_basis": self.id_basis,
            "template/ex_basis": self.ex_basis,
            "template/hinge_pivot": self.hinge_pivot,
            "template/hinge_axis": self.hinge_axis,
            "template/hinge_weights": self.hinge_weights,
            "template/landmarks": self.landmark_indices.astype(np.float64),
        }

    def save(self, path: Union[str, Path]) -> Path:
        return save_tensors(path, self.state_dict())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MorphableTemplate":
        state = load_tensors(path)
        try:
            labels = np.rint(state["template/labels"]).astype(np.int64)
            mean = TriMesh(
                state["template/vertices"].astype(np.float64),
                np.rint(state["template/faces"]).astype(np.int64),
                None if np.all(labels < 0) else labels,
            )
            return cls(
                mean,
                state["template/id_basis"],
                state["template/ex_basis"],
                state["template/hinge_pivot"],
                state["template/hinge_axis"],
                np.clip(state["template/hinge_weights"].astype(np.float64), 0.0, 1.0),
                np.rint(state["template/landmarks"]).astype(np.int64),
            )
        except KeyError as exc:
            raise CheckpointError(f"{path} is not a template checkpoint (missing {exc})") from exc


@dataclass
class RegistrationConfig:
    """
    Weights and schedules of template fitting and ARAP fine-tuning.

    Attributes:
        lambda_landmark: Landmark term weight
        lambda_data: Point-to-plane data term weight
        lambda_id: Identity coefficient regulariser
        lambda_ex: Expression coefficient regulariser
        lambda_jaw: Jaw angle regulariser
        lambda_rigid: Regulariser of the rigid corrections
        iterations: Adam iterations of template fitting
        warmup_iterations: Iterations with the down-weighted data term
        warmup_data_factor: Data weight factor during warm-up
        lr: Adam learning rate
        final_iterations: Trailing iterations with the reduced rate
        final_lr_factor: Rate factor of the trailing phase
        max_distance: Correspondence distance filter
        min_cosine: Normal agreement filter
        data_eps: Charbonnier smoothing of the data residuals
        landmark_eps: Charbonnier smoothing of the landmark residuals
        arap_lambda_start: Initial ARAP weight
        arap_decay: ARAP weight decay per L-BFGS iteration
        arap_lambda_floor: Lowest ARAP weight
        arap_rounds: Rotation/offset alternations
        arap_inner_iterations: L-BFGS iterations per alternation
        subdivision_factor: Face-region triangle multiplier before ARAP
        progress: Show progress bars
    """

    lambda_landmark: float = 1.0
    lambda_data: float = 1.0
    lambda_id: float = 1.0 / 5000.0
    lambda_ex: float = 1.0 / 3000.0
    lambda_jaw: float = 1.0 / 10.0
    lambda_rigid: float = 1.0 / 10.0
    iterations: int = 2000
    warmup_iterations: int = 300
    warmup_data_factor: float = 1.0 / 15.0
    lr: float = 4e-3
    final_iterations: int = 500
    final_lr_factor: float = 1.0 / 5.0
    max_distance: float = 0.02
    min_cosine: float = 0.5
    data_eps: float = 1e-3
    landmark_eps: float = 1e-4
    arap_lambda_start: float = 10.0
    arap_decay: float = 0.99
    arap_lambda_floor: float = 0.1
    arap_rounds: int = 10
    arap_inner_iterations: int = 30
    subdivision_factor: int = 16
    progress: bool = False


@dataclass
class FitParams:
    """
    Template parameters of one subject and its scans.

    Attributes:
        alpha: Identity coefficients (D_id,)
        beta: Expression coefficients per scan (S, D_ex)
        angles: Jaw angle per scan (S,)
        rotvecs: Rotation vectors per scan (S, 3)
        translations: Translations per scan (S, 3)
        scale: Shared scale
        energies: Total objective per iteration
    """

    alpha: np.ndarray
    beta: np.ndarray
    angles: np.ndarray
    rotvecs: np.ndarray
    translations: np.ndarray
    scale: float = 1.0
    energies: List[float] = field(default_factory=list)

    @classmethod
    def zeros(cls, template: MorphableTemplate, num_scans: int) -> "FitParams":
        return cls(
            np.zeros(template.d_id),
            np.zeros((num_scans, template.d_ex)),
            np.zeros(num_scans),
            np.zeros((num_scans, 3)),
            np.zeros((num_scans, 3)),
        )

    @property
    def num_scans(self) -> int:
        return self.beta.shape[0]

    def transform(self, j: int) -> SimilarityTransform:
        return SimilarityTransform.from_rotvec(self.scale, self.rotvecs[j], self.translations[j])

    def posed_vertices(self, template: MorphableTemplate, j: int) -> np.ndarray:
        unposed = template.articulate(template.shape(self.alpha, self.beta[j]), self.angles[j])
        return self.transform(j).apply(unposed)

    def posed_mesh(self, template: MorphableTemplate, j: int) -> TriMesh:
        return template.mean.with_vertices(self.posed_vertices(template, j))

    def to_dict(self) -> Dict:
        return {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "angles": self.angles.tolist(),
            "rotvecs": self.rotvecs.tolist(),
            "translations": self.translations.tolist(),
            "scale": self.scale,
            "energies": list(self.energies),
        }


def rigid_align_to_scan(template: MorphableTemplate, landmarks: np.ndarray) -> SimilarityTransform:
    """Similarity that maps the mean template landmarks onto observed landmarks."""
    return umeyama_align(template.landmarks(template.mean.vertices), landmarks)


def _check_inputs(template: MorphableTemplate, scans: Sequence[OrientedPointCloud], landmarks: Sequence[np.ndarray]) -> List[np.ndarray]:
    if len(scans) == 0:
        raise ValueError("Template fitting needs at least one scan")
    if len(landmarks) != len(scans):
        raise DimensionMismatchError("landmark sets", len(scans), len(landmarks))
    out = []
    expected = (len(template.landmark_indices), 3)
    for lm in landmarks:
        lm = np.asarray(lm, dtype=np.float64)
        if lm.shape != expected:
            raise DimensionMismatchError("landmark count", expected, lm.shape)
        out.append(lm)
    return out


def fit_template(
    template: MorphableTemplate,
    scans: Sequence[OrientedPointCloud],
    landmarks: Sequence[np.ndarray],
    config: Optional[RegistrationConfig] = None,
    initial: Optional[FitParams] = None,
    prealign: bool = True,
) -> FitParams:
    """
    Fit the template jointly to all scans of one subject.

    Args:
        template: Morphable template
        scans: Oriented scans, one per expression
        landmarks: Landmarks (68, 3) per scan, matching ``template.landmark_indices``
        config: Weights and schedule
        initial: Starting parameters; zero coefficients otherwise
        prealign: Initialise the rigid parameters by landmark similarity alignment

    Returns:
        FitParams: Fitted parameters with the objective per iteration

    Raises:
        DimensionMismatchError: Landmark count mismatch
        DivergenceError: The objective became non-finite
    """
    config = config or RegistrationConfig()
    landmarks = _check_inputs(template, scans, landmarks)
    targets = [ScanTarget(scan) for scan in scans]
    num_scans = len(scans)
    params = FitParams.zeros(template, num_scans) if initial is None else FitParams(
        initial.alpha.copy(), initial.beta.copy(), initial.angles.copy(),
        initial.rotvecs.copy(), initial.translations.copy(), initial.scale,
    )
    if prealign and initial is None:
        transforms = [rigid_align_to_scan(template, lm) for lm in landmarks]
        params.scale = float(np.mean([t.scale for t in transforms]))
        for j, t in enumerate(transforms):
            params.rotvecs[j] = t.rotvec
            params.translations[j] = t.translation
    rot_init = params.rotvecs.copy()
    trans_init = params.translations.copy()

    scale = np.array([params.scale])
    optimiser = Adam()
    schedule = LRSchedule(config.lr, events=[(max(config.iterations - config.final_iterations, 0), config.final_lr_factor)])
    optimiser.add_group("template", [params.alpha, params.beta, params.angles, params.rotvecs, params.translations, scale], schedule)

    n = template.num_vertices
    lm_idx = template.landmark_indices
    bar = tqdm(range(config.iterations), desc="template fit", disable=not config.progress)
    for iteration in bar:
        data_weight = config.lambda_data * (config.warmup_data_factor if iteration < config.warmup_iterations else 1.0)
        alpha_bar = 2.0 * config.lambda_id * params.alpha
        beta_bar = 2.0 * config.lambda_ex * params.beta
        angles_bar = 2.0 * config.lambda_jaw * params.angles
        rot_bar = 2.0 * config.lambda_rigid * (params.rotvecs - rot_init)
        trans_bar = 2.0 * config.lambda_rigid * (params.translations - trans_init)
        scale_bar = 0.0
        loss = config.lambda_id * float(params.alpha @ params.alpha)
        loss += config.lambda_ex * float(np.sum(params.beta ** 2)) + config.lambda_jaw * float(np.sum(params.angles ** 2))
        loss += config.lambda_rigid * float(np.sum((params.rotvecs - rot_init) ** 2) + np.sum((params.translations - trans_init) ** 2))

        for j in range(num_scans):
            shape = template.shape(params.alpha, params.beta[j])
            hinge = Rotation.from_rotvec(params.angles[j] * template.hinge_axis).as_matrix()
            rel = shape - template.hinge_pivot
            rotated = rel @ hinge.T
            w = template.hinge_weights[:, None]
            unposed = (1.0 - w) * shape + w * (rotated + template.hinge_pivot)
            rotation = Rotation.from_rotvec(params.rotvecs[j]).as_matrix()
            posed = scale[0] * unposed @ rotation.T + params.translations[j]

            vertices_bar = np.zeros_like(posed)
            residual = posed[lm_idx] - landmarks[j]
            loss += config.lambda_landmark * float(np.sum(charbonnier(residual, config.landmark_eps))) / len(lm_idx)
            vertices_bar[lm_idx] += config.lambda_landmark * charbonnier_grad(residual, config.landmark_eps) / len(lm_idx)

            if data_weight > 0.0:
                normals = template.mean.with_vertices(posed).vertex_normals
                p2p = filtered_p2p(posed, normals, targets[j], config.max_distance, config.min_cosine)
                r = np.where(p2p.active, p2p.signed, 0.0)
                loss += data_weight * float(np.sum(charbonnier(r, config.data_eps))) / n
                scan_normals = targets[j].scan.normals[p2p.nn_index]
                vertices_bar += (data_weight * charbonnier_grad(r, config.data_eps) / n)[:, None] * scan_normals

            trans_bar[j] += vertices_bar.sum(axis=0)
            scale_bar += float(np.sum(vertices_bar * (unposed @ rotation.T)))
            rot_bar[j] += rotvec_backward(params.rotvecs[j], scale[0] * vertices_bar.T @ unposed)
            unposed_bar = scale[0] * vertices_bar @ rotation
            shape_bar = (1.0 - w) * unposed_bar + w * (unposed_bar @ hinge)
            angles_bar[j] += float(np.sum(w * unposed_bar * np.cross(template.hinge_axis, rotated)))
            alpha_bar += np.einsum("nd,ndk->k", shape_bar, template.id_basis)
            beta_bar[j] += np.einsum("nd,ndk->k", shape_bar, template.ex_basis)

        if not np.isfinite(loss):
            raise DivergenceError("Template fitting objective became non-finite", iteration=iteration)
        params.energies.append(loss)
        try:
            optimiser.step({"template": [alpha_bar, beta_bar, angles_bar, rot_bar, trans_bar, np.array([scale_bar])]})
        except NonFiniteError as exc:
            raise DivergenceError(f"Template fitting gradient became non-finite: {exc}", iteration=iteration) from exc
        if iteration % 100 == 0:
            logger.debug("template fit iteration %d: %.6g", iteration, loss)

    params.scale = float(scale[0])
    if params.energies:
        logger.info("Template fit finished: energy %.6g -> %.6g", params.energies[0], params.energies[-1])
    return params
