"""
Sequence Tracking

Fits one identity to a sequence of observations and then optimises the
per-frame expression codes and rigid poses jointly. Frame poses map world
coordinates into model space, ``x = s R y + t``, and share one scale.
Consecutive frames are tied together by total-variation priors on the
expression codes and on the pose parameters.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..core.optim import Adam, LRSchedule
from ..errors import DimensionMismatchError
from ..fields.expression import DeformationField, ExpressionCode
from ..fields.identity import EnsembleField, IdentityCode
from ..geometry.mesh import OrientedPointCloud
from ..registration.similarity import SimilarityTransform, rotvec_backward, umeyama_align
from ..utils.rng import make_rng
from .codes import FitConfig, FitResult, check_observation, fit_identity_code, landmark_rows, observation_terms, subsample

logger = logging.getLogger(__name__)


@dataclass
class TrackConfig:
    """
    Attributes:
        fit: Settings of the canonical-frame identity fit and of the per-frame terms
        iterations: Joint iterations over the whole sequence
        lr: Expression code learning rate
        pose_lr: Learning rate of rotation vectors, translations and the log scale
        lambda_tv_ex: Total-variation weight on consecutive expression codes
        lambda_tv_pose: Total-variation weight on consecutive poses
        tv_eps: Smoothing of the total-variation norm
        canonical_frame: Frame the identity is fitted on
    """

    fit: FitConfig = field(default_factory=FitConfig)
    iterations: int = 300
    lr: float = 0.01
    pose_lr: float = 1e-3
    lambda_tv_ex: float = 0.01
    lambda_tv_pose: float = 0.01
    tv_eps: float = 1e-4
    canonical_frame: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be non-negative, got {self.iterations}")
        if self.lambda_tv_ex < 0.0 or self.lambda_tv_pose < 0.0:
            raise ValueError("Total-variation weights must be non-negative")


@dataclass
class TrackState:
    """
    Attributes:
        identity: Identity code fitted on the canonical frame
        z_ex: Per-frame expression codes (T, d_ex)
        transforms: Per-frame world-to-model similarities
        history: One row per joint iteration
        identity_fit: Result of the canonical-frame fit
    """

    identity: IdentityCode
    z_ex: np.ndarray
    transforms: List[SimilarityTransform]
    history: List[Dict[str, float]] = field(default_factory=list)
    identity_fit: Optional[FitResult] = None

    @property
    def num_frames(self) -> int:
        return len(self.transforms)

    def expression(self, frame: int) -> ExpressionCode:
        return ExpressionCode(self.z_ex[frame].copy())

    def total_variation(self, eps: float = 1e-4) -> Dict[str, float]:
        ex, _ = total_variation(self.z_ex, eps)
        pose, _ = total_variation(_pose_matrix(self.transforms), eps)
        return {"tv_ex": ex, "tv_pose": pose}

    def to_dict(self) -> Dict:
        return {
            "identity": self.identity.to_dict(),
            "expressions": [ExpressionCode(z).to_dict() for z in self.z_ex],
            "transforms": [t.to_dict() for t in self.transforms],
            "total_variation": self.total_variation(),
            "final_loss": self.history[-1]["loss"] if self.history else None,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TrackState":
        z_ex = np.array([ExpressionCode.from_dict(e).z_ex for e in data["expressions"]])
        transforms = [SimilarityTransform.from_dict(t) for t in data["transforms"]]
        return cls(IdentityCode.from_dict(data["identity"]), z_ex, transforms)


def total_variation(values: np.ndarray, eps: float):
    """``sum_f sqrt(||v_{f+1} - v_f||^2 + eps^2)`` and its gradient."""
    values = np.asarray(values, dtype=np.float64)
    grad = np.zeros_like(values)
    if len(values) < 2:
        return 0.0, grad
    delta = np.diff(values, axis=0)
    norm = np.sqrt(np.sum(delta * delta, axis=1) + eps * eps)
    unit = delta / norm[:, None]
    grad[1:] += unit
    grad[:-1] -= unit
    return float(norm.sum()), grad


def _pose_matrix(transforms: Sequence[SimilarityTransform]) -> np.ndarray:
    return np.array([np.concatenate([t.rotvec, t.translation]) for t in transforms]).reshape(-1, 6)


def initial_poses(
    anchors: np.ndarray,
    rows: Optional[np.ndarray],
    landmarks: Sequence[Optional[np.ndarray]],
    num_frames: int,
) -> List[SimilarityTransform]:
    """
    Per-frame Umeyama alignment of observed landmarks onto model anchors.

    Frames without landmarks (or a layout without the named landmarks) get
    the identity transform. The scale is replaced by the mean over aligned
    frames.
    """
    transforms = []
    for f in range(num_frames):
        target = landmarks[f] if f < len(landmarks) else None
        if rows is None or target is None:
            transforms.append(SimilarityTransform.identity())
            continue
        transforms.append(umeyama_align(np.asarray(target, dtype=np.float64), anchors[rows]))
    aligned = [t.scale for f, t in enumerate(transforms) if rows is not None and f < len(landmarks) and landmarks[f] is not None]
    scale = float(np.mean(aligned)) if aligned else 1.0
    return [SimilarityTransform(scale, t.rotation, t.translation) for t in transforms]


def _to_model(transform: SimilarityTransform, cloud: OrientedPointCloud) -> OrientedPointCloud:
    return OrientedPointCloud(transform.apply(cloud.points), transform.apply_vectors(cloud.normals), cloud.labels)


def track_sequence(
    field_: EnsembleField,
    defo: DeformationField,
    frames: Sequence[OrientedPointCloud],
    landmarks: Optional[Sequence[Optional[np.ndarray]]] = None,
    config: Optional[TrackConfig] = None,
) -> TrackState:
    """
    Track a sequence of observations.

    Args:
        field_: Trained identity field
        defo: Trained deformation field
        frames: Observations in world coordinates
        landmarks: Per-frame tracking landmarks (8, 3) in world coordinates, None where missing
        config: Tracking settings

    Returns:
        TrackState

    Raises:
        DegenerateInputError: An empty frame
        NonFiniteError: A frame with non-finite values
        FittingError: Too many failed root finds
    """
    config = config or TrackConfig()
    if not frames:
        raise DimensionMismatchError("tracking frames", "at least 1", 0)
    num_frames = len(frames)
    for frame in frames:
        check_observation(frame)
    landmarks = list(landmarks) if landmarks is not None else [None] * num_frames
    if len(landmarks) != num_frames:
        raise DimensionMismatchError("landmark frames", num_frames, len(landmarks))
    if not 0 <= config.canonical_frame < num_frames:
        raise ValueError(f"canonical_frame {config.canonical_frame} outside 0..{num_frames - 1}")

    rows = landmark_rows(field_.layout)
    if rows is None:
        logger.warning("Anchor layout lacks the tracking landmarks; poses start at the identity")
    missing = [f for f, lm in enumerate(landmarks) if lm is None]
    if missing:
        logger.warning("Frames %s have no landmarks; they are tracked from points only", missing)

    mean_anchors = field_.predict_anchors(np.zeros(field_.config.d_glob))
    transforms = initial_poses(mean_anchors, rows, landmarks, num_frames)

    c = config.canonical_frame
    pose = transforms[c]
    canonical_landmarks = pose.apply(landmarks[c]) if landmarks[c] is not None else None
    identity_fit = fit_identity_code(field_, defo, _to_model(pose, frames[c]), config.fit, canonical_landmarks)
    identity = identity_fit.identity
    logger.info("Identity fitted on frame %d (loss %s)", c, identity_fit.final_loss)

    transforms = initial_poses(identity.anchors, rows, landmarks, num_frames)
    z_ex = np.tile(identity_fit.expression.z_ex, (num_frames, 1)).astype(np.float64)
    rotvecs = np.array([t.rotvec for t in transforms])
    translations = np.array([t.translation for t in transforms])
    log_scale = np.array([np.log(transforms[0].scale)])

    opt = Adam()
    opt.add_group("expression", [z_ex], LRSchedule(config.lr))
    opt.add_group("pose", [rotvecs, translations, log_scale], LRSchedule(config.pose_lr))

    fit = config.fit
    history: List[Dict[str, float]] = []
    for it in tqdm(range(config.iterations), desc="track", disable=not fit.progress):
        scale = float(np.exp(log_scale[0]))
        z_ex_bar = np.zeros_like(z_ex)
        rot_bar = np.zeros_like(rotvecs)
        trans_bar = np.zeros_like(translations)
        scale_bar = 0.0
        sums: Dict[str, float] = {}
        for f in range(num_frames):
            transform = SimilarityTransform.from_rotvec(scale, rotvecs[f], translations[f])
            world_points, world_normals = subsample(frames[f].points, frames[f].normals, fit.points_per_step, make_rng(fit.seed, "track", it, f))
            model_landmarks = transform.apply(landmarks[f]) if landmarks[f] is not None else None
            obs = observation_terms(
                field_, defo, identity.z_glob, identity.z_loc, z_ex[f],
                transform.apply(world_points), transform.apply_vectors(world_normals), fit, model_landmarks, rows,
            )
            for name, term in obs.terms.items():
                sums[name] = sums.get(name, 0.0) + term / num_frames
            z_ex_bar[f] = obs.z_ex / num_frames

            # Chain model-space cotangents through x = s R y + t.
            world = [world_points]
            model_bar = [obs.points]
            if obs.landmarks is not None:
                world.append(np.asarray(landmarks[f], dtype=np.float64))
                model_bar.append(obs.landmarks)
            y = np.concatenate(world)
            x_bar = np.concatenate(model_bar) / num_frames
            trans_bar[f] = x_bar.sum(axis=0)
            rotated = y @ transform.rotation.T
            scale_bar += float(np.sum(x_bar * rotated))
            rot_bar[f] = rotvec_backward(rotvecs[f], scale * x_bar.T @ y)

        reg = fit.lambda_ex * float(np.sum(z_ex * z_ex)) / num_frames
        z_ex_bar += 2.0 * fit.lambda_ex * z_ex / num_frames
        tv_ex, tv_ex_grad = total_variation(z_ex, config.tv_eps)
        pose = np.concatenate([rotvecs, translations], axis=1)
        tv_pose, tv_pose_grad = total_variation(pose, config.tv_eps)
        z_ex_bar += config.lambda_tv_ex * tv_ex_grad
        rot_bar += config.lambda_tv_pose * tv_pose_grad[:, :3]
        trans_bar += config.lambda_tv_pose * tv_pose_grad[:, 3:]

        sums["reg_ex"] = reg
        sums["tv_ex"] = config.lambda_tv_ex * tv_ex
        sums["tv_pose"] = config.lambda_tv_pose * tv_pose
        row = {"iteration": it, "loss": sum(sums.values())}
        row.update(sums)
        history.append(row)
        opt.step({"expression": [z_ex_bar], "pose": [rot_bar, trans_bar, np.array([scale_bar * scale])]})

    scale = float(np.exp(log_scale[0]))
    transforms = [SimilarityTransform.from_rotvec(scale, rotvecs[f], translations[f]) for f in range(num_frames)]
    if history:
        logger.info("Tracked %d frames: final loss %.6g", num_frames, history[-1]["loss"])
    return TrackState(identity, z_ex, transforms, history, identity_fit)


def tracked_landmarks(field_: EnsembleField, defo: DeformationField, state: TrackState) -> Optional[np.ndarray]:
    """
    Tracking landmarks predicted by the model for every frame, in world
    coordinates (T, 8, 3); None if the layout lacks them.
    """
    rows = landmark_rows(field_.layout)
    if rows is None:
        return None
    code = state.identity if state.identity.anchors is not None else field_.complete(state.identity)
    anchors = code.anchors[rows]
    summary = defo.project(code)
    out = []
    for f, transform in enumerate(state.transforms):
        posed = anchors + defo.forward(anchors, state.z_ex[f], summary).displacements
        out.append(transform.inverse().apply(posed))
    return np.array(out)
