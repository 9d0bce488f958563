"""
Identity Stage

Auto-decoder training of the identity field: network parameters and one
code per subject are optimised jointly. Each subject contributes the IGR
loss, the anchor supervision of the anchor network, the symmetry
regulariser of partner latents and the squared code norms.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from tqdm import tqdm

from ..core.dense import NetGrads
from ..core.optim import Adam, LRSchedule
from ..errors import DimensionMismatchError, DivergenceError, NonFiniteError
from ..fields.identity import IdentityCode, symmetry_penalty
from ..utils.parallel import map_items
from ..utils.rng import make_rng
from .losses import IGRWeights, loss_igr
from .model import IdentityModel
from .samples import IdentitySampleSet

logger = logging.getLogger(__name__)


@dataclass
class IdentityTrainConfig:
    """
    Attributes:
        epochs: Passes over the subjects
        batch_size: Subjects per step
        surface_samples: Surface samples per subject and step
        off_surface_samples: Off-surface samples per subject and step
        samples_per_subject: Precomputed surface samples per subject
        lr_nets: Network learning rate
        lr_codes: Code learning rate
        decay_every: Epochs between learning-rate decays
        decay_factor: Factor of each decay
        clip: Gradient-norm clip of the networks
        weight_decay: L2 weight decay of the networks
        lambda_anchor: Anchor supervision weight
        lambda_sym: Symmetry regulariser weight
        lambda_reg: Code-norm regulariser weight
        igr: IGR term weights
        init_std: Standard deviation of the code initialisation
        checkpoint_every: Epochs between checkpoints (0 disables)
        threads: Workers evaluating the subjects of a batch
        seed: Seed of the sample draws
        progress: Show a progress bar
    """

    epochs: int = 1500
    batch_size: int = 16
    surface_samples: int = 500
    off_surface_samples: int = 500
    samples_per_subject: int = 200000
    lr_nets: float = 5e-4
    lr_codes: float = 1e-3
    decay_every: int = 300
    decay_factor: float = 0.5
    clip: Optional[float] = 0.1
    weight_decay: float = 0.01
    lambda_anchor: float = 7.5
    lambda_sym: float = 0.005
    lambda_reg: float = 0.005
    igr: IGRWeights = field(default_factory=IGRWeights)
    init_std: float = 0.01
    checkpoint_every: int = 100
    threads: int = 1
    seed: int = 0
    progress: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be non-negative and batch_size positive")
        for name in ("lambda_anchor", "lambda_sym", "lambda_reg"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class SubjectStep:
    """Loss breakdown and gradients of one subject in a step."""

    index: int
    value: float
    terms: Dict[str, float]
    net_grads: Dict[str, NetGrads]
    z_glob_bar: np.ndarray
    z_loc_bar: np.ndarray


@dataclass
class TrainResult:
    """
    Attributes:
        history: One row per epoch (``epoch``, ``loss`` and the term means)
        initial_loss: Loss of the first step
        final_loss: Mean loss of the last epoch
    """

    history: List[Dict[str, float]]
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None


def anchor_loss(predicted: np.ndarray, target: np.ndarray):
    """``mean_k ||a_hat_k - a_k||^2`` and its cotangent with respect to the prediction."""
    diff = np.asarray(predicted) - np.asarray(target)
    k = max(len(diff), 1)
    return float(np.sum(diff * diff)) / k, 2.0 * diff / k


def subject_loss(
    model: IdentityModel,
    index: int,
    samples: IdentitySampleSet,
    config: IdentityTrainConfig,
    rng: np.random.Generator,
    batch: Optional[int] = None,
) -> SubjectStep:
    """Loss of one subject and its gradients with respect to networks and the subject's code."""
    field_ = model.field
    z_glob, z_loc = model.z_glob[index], model.z_loc[index]
    code = IdentityCode(z_glob.copy(), z_loc.copy(), field_.predict_anchors(z_glob))
    if samples.anchors.shape != code.anchors.shape:
        raise DimensionMismatchError("ground-truth anchors", code.anchors.shape, samples.anchors.shape)
    surface, normals, off = samples.draw(rng, config.surface_samples, config.off_surface_samples)
    igr = loss_igr(field_, code, surface, normals, off, config.igr, batch=batch)

    terms = dict(igr.terms)
    value = igr.value
    anchors_bar = igr.code_grads.anchors.copy()
    if field_.num_anchors:
        a_value, a_bar = anchor_loss(code.anchors, samples.anchors)
        terms["anchor"] = config.lambda_anchor * a_value
        value += terms["anchor"]
        anchors_bar += config.lambda_anchor * a_bar
    net_grads = dict(igr.net_grads)
    anchor_grads, z_glob_from_anchors = field_.anchor_backward(z_glob, anchors_bar)
    if anchor_grads is not None:
        net_grads["anchors"] = anchor_grads

    z_glob_bar = igr.code_grads.z_glob + z_glob_from_anchors
    z_loc_bar = igr.code_grads.z_loc.copy()
    if field_.config.share_symmetric and config.lambda_sym > 0.0:
        s_value, s_grad = symmetry_penalty(field_.layout, z_loc)
        terms["symmetry"] = config.lambda_sym * s_value
        value += terms["symmetry"]
        z_loc_bar += config.lambda_sym * s_grad
    terms["reg"] = config.lambda_reg * float(np.sum(z_glob * z_glob) + np.sum(z_loc * z_loc))
    value += terms["reg"]
    z_glob_bar += 2.0 * config.lambda_reg * z_glob
    z_loc_bar += 2.0 * config.lambda_reg * z_loc
    return SubjectStep(index, value, terms, net_grads, z_glob_bar, z_loc_bar)


def build_optimizer(model: IdentityModel, config: IdentityTrainConfig, steps_per_epoch: int) -> Adam:
    every = max(config.decay_every * steps_per_epoch, 1) if config.decay_every else None
    opt = Adam()
    opt.add_group("nets", model.field.parameters(), LRSchedule(config.lr_nets, every=every, every_factor=config.decay_factor),
                  clip=config.clip, weight_decay=config.weight_decay)
    opt.add_group("codes", [model.z_glob, model.z_loc], LRSchedule(config.lr_codes, every=every, every_factor=config.decay_factor))
    return opt


def train_identity(
    model: IdentityModel,
    samples: List[IdentitySampleSet],
    config: Optional[IdentityTrainConfig] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    on_epoch: Optional[Callable[[int, Dict[str, float]], None]] = None,
) -> TrainResult:
    """
    Train the identity field and the subject codes.

    Training resumes from ``model.epoch`` and ``model.optim_state`` when a
    loaded model is passed in.

    Args:
        model: Identity model; its codes are rows matching ``samples``
        samples: One sample set per subject
        config: Schedule and loss weights
        checkpoint_path: Where periodic and divergence checkpoints go
        on_epoch: Called with the epoch index and its history row

    Returns:
        TrainResult: Loss history; ``model`` is updated in place and marked trained

    Raises:
        DivergenceError: Non-finite loss or gradient; the last finite state is
            saved to ``checkpoint_path`` first
    """
    config = config or IdentityTrainConfig()
    if len(samples) != model.num_subjects:
        raise DimensionMismatchError("identity sample sets", model.num_subjects, len(samples))
    num_subjects = model.num_subjects
    steps_per_epoch = max(1, math.ceil(num_subjects / config.batch_size))
    opt = build_optimizer(model, config, steps_per_epoch)
    if model.optim_state:
        opt.load_state_dict(model.optim_state)
        logger.info("Resuming identity training at epoch %d", model.epoch)

    result = TrainResult([])
    start = model.epoch
    for epoch in tqdm(range(start, config.epochs), desc="identity", disable=not config.progress, initial=start, total=config.epochs):
        order = make_rng(config.seed, "identity-epoch", epoch).permutation(num_subjects)
        sums: Dict[str, float] = {}
        count = 0
        for b in range(steps_per_epoch):
            batch = order[b * config.batch_size:(b + 1) * config.batch_size]
            if len(batch) == 0:
                continue
            try:
                steps = map_items(
                    lambda j: subject_loss(model, int(j), samples[int(j)], config, make_rng(config.seed, "identity", epoch, b, int(j)), batch=b),
                    batch,
                    config.threads,
                )
                value = sum(s.value for s in steps) / len(steps)
                if not np.isfinite(value):
                    raise DivergenceError("Non-finite identity loss", iteration=epoch, batch=b)
                opt.step(_gather(model, steps))
            except (DivergenceError, NonFiniteError) as exc:
                _save_last_finite(model, opt, checkpoint_path)
                if isinstance(exc, DivergenceError) and exc.iteration is not None:
                    raise
                raise DivergenceError(f"Identity training diverged: {exc}", iteration=epoch, batch=b) from exc
            if result.initial_loss is None:
                result.initial_loss = value
            for s in steps:
                for name, term in s.terms.items():
                    sums[name] = sums.get(name, 0.0) + term
                sums["loss"] = sums.get("loss", 0.0) + s.value
                count += 1

        row = {"epoch": epoch}
        row.update({name: total / max(count, 1) for name, total in sorted(sums.items())})
        result.history.append(row)
        result.final_loss = row.get("loss")
        model.epoch = epoch + 1
        if on_epoch is not None:
            on_epoch(epoch, row)
        logger.debug("Identity epoch %d: loss %.6g", epoch, row.get("loss", float("nan")))
        if checkpoint_path and config.checkpoint_every and model.epoch % config.checkpoint_every == 0:
            model.optim_state = opt.state_dict()
            model.save(checkpoint_path)

    model.trained = True
    model.optim_state = opt.state_dict()
    if checkpoint_path:
        model.save(checkpoint_path)
    logger.info("Identity stage finished after %d epochs (loss %s)", model.epoch, result.final_loss)
    return result


def _gather(model: IdentityModel, steps: List[SubjectStep]) -> Dict[str, List[np.ndarray]]:
    scale = 1.0 / len(steps)
    total = model.field.zero_grads()
    z_glob_bar = np.zeros_like(model.z_glob)
    z_loc_bar = np.zeros_like(model.z_loc)
    for s in steps:
        for name, grads in s.net_grads.items():
            total[name].add_(grads)
        z_glob_bar[s.index] += s.z_glob_bar
        z_loc_bar[s.index] += s.z_loc_bar
    net_list = [g * scale for g in model.field.grads_as_list(total)]
    return {"nets": net_list, "codes": [z_glob_bar * scale, z_loc_bar * scale]}


def _save_last_finite(model: IdentityModel, opt: Adam, path: Optional[Union[str, Path]]) -> None:
    if not path:
        return
    model.optim_state = opt.state_dict()
    model.save(path)
    logger.error("Saved last finite identity state to %s", path)


def code_statistics(model: IdentityModel) -> Dict[str, float]:
    """Mean and spread of the learned code norms."""
    glob = np.linalg.norm(model.z_glob, axis=1)
    loc = np.linalg.norm(model.z_loc.reshape(model.num_subjects, -1), axis=1)
    return {
        "z_glob_norm_mean": float(glob.mean()) if len(glob) else 0.0,
        "z_glob_norm_std": float(glob.std()) if len(glob) else 0.0,
        "z_loc_norm_mean": float(loc.mean()) if len(loc) else 0.0,
        "z_loc_norm_std": float(loc.std()) if len(loc) else 0.0,
    }


def symmetry_gap(model: IdentityModel) -> np.ndarray:
    """Per-subject ``sum_k ||z_k - z_k*||^2`` over partner regions (S,)."""
    return np.array([symmetry_penalty(model.field.layout, z)[0] for z in model.z_loc])
