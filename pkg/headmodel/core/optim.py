"""
Adam optimiser, learning-rate schedules and gradient clipping.

Parameters are NumPy arrays updated in place. ``adam_step`` is the functional
core; ``Adam`` groups parameters that share a schedule, a clip threshold and
a weight-decay coefficient.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DimensionMismatchError, NonFiniteError

logger = logging.getLogger(__name__)


@dataclass
class LRSchedule:
    """
    Piecewise-constant learning rate.

    Attributes:
        base_lr: Rate at step 0
        events: ``(step, factor)`` pairs; the factor applies from that step on
        every: Optional period of an additional repeating decay
        every_factor: Factor of the repeating decay
    """

    base_lr: float
    events: List[Tuple[int, float]] = field(default_factory=list)
    every: Optional[int] = None
    every_factor: float = 1.0

    def rate(self, step: int) -> float:
        lr = self.base_lr
        for event_step, factor in sorted(self.events):
            if step >= event_step:
                lr *= factor
        if self.every:
            lr *= self.every_factor ** (step // self.every)
        return lr


@dataclass
class OptimState:
    """Adam state of one parameter group."""

    schedule: LRSchedule
    clip: Optional[float] = None
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)


def clip_by_global_norm(grads: Sequence[np.ndarray], threshold: Optional[float]) -> Tuple[List[np.ndarray], float]:
    """
    Scale gradients so that their joint L2 norm does not exceed ``threshold``.

    Returns:
        Tuple of the (possibly scaled) gradients and the norm before clipping
    """
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if threshold is None or not np.isfinite(norm) or norm <= threshold:
        return list(grads), norm
    scale = threshold / norm
    return [g * scale for g in grads], norm


def adam_step(params: List[np.ndarray], grads: List[np.ndarray], state: OptimState) -> List[np.ndarray]:
    """
    Apply one Adam update in place.

    Clipping happens first, then L2 weight decay is added to the gradient,
    then the bias-corrected update with the scheduled learning rate.

    Args:
        params: Parameter arrays (modified in place)
        grads: Gradients with matching shapes
        state: Optimiser state (modified in place)

    Returns:
        List[np.ndarray]: The updated parameters

    Raises:
        NonFiniteError: If a gradient is non-finite after clipping; nothing is updated
    """
    if len(params) != len(grads):
        raise DimensionMismatchError("gradient count", len(params), len(grads))
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionMismatchError("gradient shape", p.shape, g.shape)
    if not state.first_moments:
        state.first_moments = [np.zeros_like(p) for p in params]
        state.second_moments = [np.zeros_like(p) for p in params]

    clipped, norm = clip_by_global_norm(grads, state.clip)
    if not all(np.all(np.isfinite(g)) for g in clipped):
        raise NonFiniteError(f"Non-finite gradient (norm {norm}) at step {state.step}")

    lr = state.schedule.rate(state.step)
    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, clipped, state.first_moments, state.second_moments):
        if state.weight_decay:
            g = g + state.weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return params


@dataclass
class ParamGroup:
    """Parameters that share one optimiser state."""

    name: str
    params: List[np.ndarray]
    state: OptimState


class Adam:
    """
    Adam over named parameter groups.

    Example:
        opt = Adam()
        opt.add_group("nets", net_params, LRSchedule(5e-4), clip=0.1, weight_decay=0.01)
        opt.add_group("codes", [codes], LRSchedule(1e-3))
        opt.step({"nets": net_grads, "codes": [code_grads]})
    """

    def __init__(self):
        self.groups: Dict[str, ParamGroup] = {}

    def add_group(
        self,
        name: str,
        params: List[np.ndarray],
        schedule: LRSchedule,
        clip: Optional[float] = None,
        weight_decay: float = 0.0,
    ) -> ParamGroup:
        group = ParamGroup(name, list(params), OptimState(schedule=schedule, clip=clip, weight_decay=weight_decay))
        self.groups[name] = group
        return group

    def step(self, grads: Dict[str, List[np.ndarray]]) -> None:
        """
        Update every group that has gradients. Groups are validated first, so
        a non-finite gradient in any group leaves all parameters untouched.
        """
        for name, group_grads in grads.items():
            clipped, _ = clip_by_global_norm(group_grads, self.groups[name].state.clip)
            if not all(np.all(np.isfinite(g)) for g in clipped):
                raise NonFiniteError(f"Non-finite gradient in parameter group '{name}'")
        for name, group_grads in grads.items():
            group = self.groups[name]
            adam_step(group.params, group_grads, group.state)

    def learning_rates(self) -> Dict[str, float]:
        return {name: g.state.schedule.rate(g.state.step) for name, g in self.groups.items()}

    def state_dict(self, prefix: str = "optim") -> Dict[str, np.ndarray]:
        state = {}
        for name, group in self.groups.items():
            state[f"{prefix}/{name}/step"] = np.array([group.state.step], dtype=np.float64)
            for i, (m, v) in enumerate(zip(group.state.first_moments, group.state.second_moments)):
                state[f"{prefix}/{name}/m{i}"] = m
                state[f"{prefix}/{name}/v{i}"] = v
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: str = "optim") -> None:
        for name, group in self.groups.items():
            key = f"{prefix}/{name}/step"
            if key not in state:
                logger.warning("No optimiser state for group '%s'; starting fresh", name)
                continue
            group.state.step = int(state[key][0])
            group.state.first_moments = [np.array(state[f"{prefix}/{name}/m{i}"], dtype=np.float64) for i in range(len(group.params))]
            group.state.second_moments = [np.array(state[f"{prefix}/{name}/v{i}"], dtype=np.float64) for i in range(len(group.params))]
