"""
Limited-memory BFGS with a strong-Wolfe line search.

The line search is ``scipy.optimize.line_search``; when it fails an Armijo
backtracking search is tried before giving up.
"""

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, List, Optional, Tuple

import numpy as np
from scipy.optimize import line_search

from ..errors import NonFiniteError

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class LBFGSResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    line_search_failed: bool = False
    values: List[float] = field(default_factory=list)


class _CachedObjective:
    """Memoises the last evaluation so value and gradient share one call."""

    def __init__(self, objective: Objective):
        self.objective = objective
        self.evaluations = 0
        self._x: Optional[np.ndarray] = None
        self._result: Optional[Tuple[float, np.ndarray]] = None

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        if self._x is None or not np.array_equal(x, self._x):
            value, grad = self.objective(x)
            self.evaluations += 1
            self._x = np.array(x, copy=True)
            self._result = (float(value), np.asarray(grad, dtype=np.float64).copy())
        return self._result

    def value(self, x: np.ndarray) -> float:
        return self(x)[0]

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self(x)[1]


def _two_loop(grad: np.ndarray, pairs: Deque[Tuple[np.ndarray, np.ndarray, float]]) -> np.ndarray:
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * np.dot(s, q)
        q -= alpha * y
        alphas.append(alpha)
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * np.dot(y, q)
        q += (alpha - beta) * s
    return q


def _backtracking(f: _CachedObjective, x: np.ndarray, value: float, grad: np.ndarray, direction: np.ndarray, c1: float, max_halvings: int = 40) -> Optional[float]:
    slope = float(np.dot(grad, direction))
    alpha = 1.0
    for _ in range(max_halvings):
        candidate = f.value(x + alpha * direction)
        if np.isfinite(candidate) and candidate <= value + c1 * alpha * slope:
            return alpha
        alpha *= 0.5
    return None


def lbfgs_minimize(
    objective: Objective,
    x0: np.ndarray,
    max_iters: int = 100,
    tol: float = 1e-8,
    history: int = 10,
    c1: float = 1e-4,
    c2: float = 0.9,
    callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
) -> LBFGSResult:
    """
    Minimise a smooth objective.

    Args:
        objective: Callable returning ``(value, gradient)``
        x0: Initial point
        max_iters: Iteration cap (0 returns ``x0`` unchanged)
        tol: Gradient-norm tolerance
        history: Number of curvature pairs kept
        c1: Sufficient-decrease constant
        c2: Curvature constant of the Wolfe conditions
        callback: Called as ``callback(iteration, x, value)`` after each accepted step

    Returns:
        LBFGSResult: Best point, its value and convergence flags
    """
    f = _CachedObjective(objective)
    x = np.array(x0, dtype=np.float64, copy=True).ravel()
    value, grad = f(x)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteError("Objective is not finite at the initial point")
    values = [value]
    grad_norm = float(np.linalg.norm(grad))
    if max_iters <= 0 or grad_norm <= tol:
        return LBFGSResult(x, value, grad_norm, 0, grad_norm <= tol, False, values)

    pairs: Deque[Tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=history)
    previous_value = None
    failed = False
    iteration = 0
    for iteration in range(1, max_iters + 1):
        direction = -_two_loop(grad, pairs)
        if np.dot(direction, grad) >= 0.0:
            pairs.clear()
            direction = -grad
        if not pairs:
            direction = direction / max(1.0, float(np.linalg.norm(direction)))

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            alpha = line_search(f.value, f.grad, x, direction, gfk=grad, old_fval=value, old_old_fval=previous_value, c1=c1, c2=c2)[0]
        if alpha is None or not np.isfinite(f.value(x + alpha * direction)):
            alpha = _backtracking(f, x, value, grad, direction, c1)
        if alpha is None:
            logger.debug("L-BFGS line search failed at iteration %d", iteration)
            failed = True
            iteration -= 1
            break

        x_new = x + alpha * direction
        value_new, grad_new = f(x_new)
        if value_new > value:
            failed = True
            iteration -= 1
            break
        s = x_new - x
        y = grad_new - grad
        sy = float(np.dot(s, y))
        if sy > 1e-12 * float(np.dot(y, y)) and sy > 0.0:
            pairs.append((s, y, 1.0 / sy))
        previous_value = value
        x, value, grad = x_new, value_new, grad_new
        values.append(value)
        grad_norm = float(np.linalg.norm(grad))
        if callback is not None:
            callback(iteration, x, value)
        if grad_norm <= tol:
            return LBFGSResult(x, value, grad_norm, iteration, True, False, values)
        if value == previous_value and np.all(s == 0.0):
            break

    return LBFGSResult(x, value, grad_norm, iteration, grad_norm <= tol, failed, values)
