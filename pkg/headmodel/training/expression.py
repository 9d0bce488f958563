"""
Expression Stage

Trains the deformation network, the identity projection and one expression
code per (subject, expression) pair against precomputed displacement
samples. Identity codes and networks stay frozen.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from tqdm import tqdm

from ..core.optim import Adam, LRSchedule
from ..errors import DivergenceError, NonFiniteError, StageOrderError
from ..fields.identity import IdentityCode
from ..utils.parallel import map_items
from ..utils.rng import make_rng
from .identity import TrainResult
from .losses import deformation_loss
from .model import ExpressionModel, IdentityModel, check_compatible
from .samples import DeformationSampleSet

logger = logging.getLogger(__name__)


@dataclass
class ExpressionTrainConfig:
    """
    Attributes:
        epochs: Passes over the (subject, expression) pairs
        batch_size: Pairs per step
        samples_per_step: Displacement samples per pair and step
        samples_per_pair: Precomputed barycentric samples per pair
        lr_nets: Learning rate of the network and the projection
        lr_codes: Code learning rate
        decay_every: Epochs between learning-rate decays
        decay_factor: Factor of each decay
        clip: Gradient-norm clip of the network group
        weight_decay: L2 weight decay of the network group
        lambda_reg: Expression code regulariser
        tau_far: Standard deviation of the far normal offsets
        tau_near: Standard deviation of the near normal offsets
        init_std: Standard deviation of the code initialisation
        checkpoint_every: Epochs between checkpoints (0 disables)
        threads: Workers evaluating the pairs of a batch
        seed: Seed of the sample draws
        progress: Show a progress bar
    """

    epochs: int = 400
    batch_size: int = 32
    samples_per_step: int = 1000
    samples_per_pair: int = 20000
    lr_nets: float = 5e-4
    lr_codes: float = 1e-3
    decay_every: int = 120
    decay_factor: float = 0.5
    clip: Optional[float] = 0.025
    weight_decay: float = 5e-4
    lambda_reg: float = 5e-5
    tau_far: float = 0.02
    tau_near: float = 0.004
    init_std: float = 0.01
    checkpoint_every: int = 50
    threads: int = 1
    seed: int = 0
    progress: bool = False


@dataclass
class _PairStep:
    row: int
    value: float
    data: float
    net_grads: List[np.ndarray]
    projection_bar: np.ndarray
    z_ex_bar: np.ndarray


def _pair_loss(model: ExpressionModel, row: int, code: IdentityCode, samples: DeformationSampleSet, config: ExpressionTrainConfig, rng) -> _PairStep:
    defo = model.defo
    z_ex = model.z_ex[row]
    summary = defo.project(code)
    x, target = samples.draw(rng, config.samples_per_step)
    evaluation = defo.forward(x, z_ex, summary)
    data, disp_bar = deformation_loss(evaluation.displacements, target)
    grads, _, z_ex_bar, summary_bar = defo.backward(evaluation, disp_bar)
    projection_bar, _ = defo.project_backward(code, summary_bar)
    reg = config.lambda_reg * float(np.dot(z_ex, z_ex))
    z_ex_bar = z_ex_bar + 2.0 * config.lambda_reg * z_ex
    return _PairStep(row, data + reg, data, grads.as_list(), projection_bar, z_ex_bar)


def train_expression(
    model: ExpressionModel,
    identity: IdentityModel,
    samples: List[DeformationSampleSet],
    config: Optional[ExpressionTrainConfig] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    on_epoch: Optional[Callable[[int, Dict[str, float]], None]] = None,
) -> TrainResult:
    """
    Train the deformation field and the expression codes.

    Args:
        model: Expression model; ``model.pairs[r]`` names the pair of code row r
        identity: Trained identity model providing frozen codes
        samples: Sample sets; each is matched to its code row by (subject, expression) index
        config: Schedule and loss weights
        checkpoint_path: Where periodic and divergence checkpoints go
        on_epoch: Called with the epoch index and its history row

    Returns:
        TrainResult: Loss history; ``model`` is updated in place and marked trained

    Raises:
        StageOrderError: The identity model has not finished training
        DivergenceError: Non-finite loss or gradient
    """
    config = config or ExpressionTrainConfig()
    if not identity.trained:
        raise StageOrderError("The identity stage has not been trained; run the identity stage first")
    check_compatible(identity, model)
    rows = [model.row(s.subject_index, s.expression_index) for s in samples]
    codes = {i: identity.code(i) for i in sorted({s.subject_index for s in samples})}

    steps_per_epoch = max(1, math.ceil(len(samples) / config.batch_size))
    every = max(config.decay_every * steps_per_epoch, 1) if config.decay_every else None
    opt = Adam()
    opt.add_group("nets", model.defo.parameters(), LRSchedule(config.lr_nets, every=every, every_factor=config.decay_factor),
                  clip=config.clip, weight_decay=config.weight_decay)
    opt.add_group("codes", [model.z_ex], LRSchedule(config.lr_codes, every=every, every_factor=config.decay_factor))
    if model.optim_state:
        opt.load_state_dict(model.optim_state)
        logger.info("Resuming expression training at epoch %d", model.epoch)

    result = TrainResult([])
    start = model.epoch
    for epoch in tqdm(range(start, config.epochs), desc="expression", disable=not config.progress, initial=start, total=config.epochs):
        order = make_rng(config.seed, "expression-epoch", epoch).permutation(len(samples))
        total, data_total, count = 0.0, 0.0, 0
        for b in range(steps_per_epoch):
            batch = order[b * config.batch_size:(b + 1) * config.batch_size]
            if len(batch) == 0:
                continue
            try:
                steps = map_items(
                    lambda i: _pair_loss(
                        model, rows[int(i)], codes[samples[int(i)].subject_index], samples[int(i)], config,
                        make_rng(config.seed, "expression", epoch, b, int(i)),
                    ),
                    batch,
                    config.threads,
                )
                value = sum(s.value for s in steps) / len(steps)
                if not np.isfinite(value):
                    raise DivergenceError("Non-finite expression loss", iteration=epoch, batch=b)
                opt.step(_gather(model, steps))
            except (DivergenceError, NonFiniteError) as exc:
                if checkpoint_path:
                    model.optim_state = opt.state_dict()
                    model.save(checkpoint_path)
                    logger.error("Saved last finite expression state to %s", checkpoint_path)
                if isinstance(exc, DivergenceError):
                    raise
                raise DivergenceError(f"Expression training diverged: {exc}", iteration=epoch, batch=b) from exc
            if result.initial_loss is None:
                result.initial_loss = value
            total += sum(s.value for s in steps)
            data_total += sum(s.data for s in steps)
            count += len(steps)

        row = {"epoch": epoch, "loss": total / max(count, 1), "displacement": data_total / max(count, 1)}
        result.history.append(row)
        result.final_loss = row["loss"]
        model.epoch = epoch + 1
        if on_epoch is not None:
            on_epoch(epoch, row)
        logger.debug("Expression epoch %d: loss %.6g", epoch, row["loss"])
        if checkpoint_path and config.checkpoint_every and model.epoch % config.checkpoint_every == 0:
            model.optim_state = opt.state_dict()
            model.save(checkpoint_path)

    model.trained = True
    model.optim_state = opt.state_dict()
    if checkpoint_path:
        model.save(checkpoint_path)
    logger.info("Expression stage finished after %d epochs (loss %s)", model.epoch, result.final_loss)
    return result


def _gather(model: ExpressionModel, steps: List[_PairStep]) -> Dict[str, List[np.ndarray]]:
    scale = 1.0 / len(steps)
    nets = [np.zeros_like(p) for p in model.defo.net.parameters()]
    projection = np.zeros_like(model.defo.projection)
    z_ex_bar = np.zeros_like(model.z_ex)
    for s in steps:
        for total, g in zip(nets, s.net_grads):
            total += g
        projection += s.projection_bar
        z_ex_bar[s.row] += s.z_ex_bar
    return {"nets": [g * scale for g in nets] + [projection * scale], "codes": [z_ex_bar * scale]}
