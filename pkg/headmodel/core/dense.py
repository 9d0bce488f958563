"""
Dense Networks

Fully-connected networks with exact analytic derivatives. A forward pass
records a tape (pre-activations, activations and, optionally, forward-mode
tangents of the input); the backward pass runs reverse accumulation over that
tape, including through the tangents. Differentiating through the tangents is
what gives exact parameter gradients of losses that depend on spatial
gradients of the network output.

Row convention: a batch is an array of shape (B, width); layer l computes
``a = h @ W.T + b`` followed by its activation.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..errors import DimensionMismatchError, NonFiniteError

SOFTPLUS_BETA = 100.0

ACTIVATIONS = ("softplus", "identity")


def softplus(a: np.ndarray, beta: float = SOFTPLUS_BETA) -> np.ndarray:
    """Numerically stable softplus ``log(1 + exp(beta * a)) / beta``."""
    return np.logaddexp(0.0, beta * a) / beta


def _activation_derivatives(kind: str, a: np.ndarray, beta: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if kind == "identity":
        ones = np.ones_like(a)
        return a, ones, np.zeros_like(a)
    s = expit(beta * a)
    return softplus(a, beta), s, beta * s * (1.0 - s)


@dataclass
class NetGrads:
    """Gradients with the same layout as a DenseNet's parameters."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def zeros_like(cls, net: "DenseNet") -> "NetGrads":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])

    def add_(self, other: "NetGrads") -> "NetGrads":
        for mine, theirs in zip(self.weights, other.weights):
            mine += theirs
        for mine, theirs in zip(self.biases, other.biases):
            mine += theirs
        return self

    def as_list(self) -> List[np.ndarray]:
        """Interleaved ``[W0, b0, W1, b1, ...]``, matching ``DenseNet.parameters``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass
class NetTape:
    """Everything a forward pass recorded for the backward pass."""

    inputs: np.ndarray
    pre: List[np.ndarray] = field(default_factory=list)
    post: List[np.ndarray] = field(default_factory=list)
    d1: List[np.ndarray] = field(default_factory=list)
    d2: List[np.ndarray] = field(default_factory=list)
    tangents: Optional[np.ndarray] = None
    tangent_pre: List[np.ndarray] = field(default_factory=list)
    tangent_post: List[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]

    @property
    def output_tangents(self) -> Optional[np.ndarray]:
        """Directional derivatives of the output, shape (B, D, out)."""
        if self.tangents is None:
            return None
        return self.tangent_post[-1]


class DenseNet:
    """
    A fully-connected network with smooth hidden activations.

    Args:
        widths: Layer widths ``[in, hidden..., out]`` (at least two entries)
        activation: Hidden activation, ``"softplus"`` or ``"identity"``
        beta: Softplus sharpness
        rng: Generator used for the uniform ``±1/sqrt(fan_in)`` initialisation
        name: Prefix used when the parameters are serialised
    """

    def __init__(
        self,
        widths: Sequence[int],
        activation: str = "softplus",
        beta: float = SOFTPLUS_BETA,
        rng: Optional[np.random.Generator] = None,
        name: str = "net",
    ):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ValueError(f"Layer widths must be at least two positive integers, got {widths}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{activation}', expected one of {ACTIVATIONS}")
        self.widths = widths
        self.beta = float(beta)
        self.name = name
        self.activations = [activation] * (len(widths) - 2) + ["identity"]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in the order ``[W0, b0, W1, b1, ...]`` (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_output_layer(self) -> None:
        self.weights[-1][...] = 0.0
        self.biases[-1][...] = 0.0

    def geometric_init(self, radius: float, rng: Optional[np.random.Generator] = None) -> None:
        """
        Sphere initialisation for SDF networks: the output approximates
        ``||x|| - radius`` at start-up.
        """
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = self.widths[-2]
        self.weights[-1][...] = rng.normal(np.sqrt(np.pi) / np.sqrt(fan_in), 1e-5, size=self.weights[-1].shape)
        self.biases[-1][...] = -radius
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            w[...] = rng.normal(0.0, np.sqrt(2.0) / np.sqrt(w.shape[0]), size=w.shape)
            b[...] = 0.0

    def copy(self) -> "DenseNet":
        clone = DenseNet(self.widths, self.activations[0] if self.num_layers > 1 else "identity", self.beta, name=self.name)
        clone.activations = list(self.activations)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def state_dict(self, prefix: Optional[str] = None) -> Dict[str, np.ndarray]:
        prefix = self.name if prefix is None else prefix
        state = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            state[f"{prefix}/W{i}"] = w
            state[f"{prefix}/b{i}"] = b
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: Optional[str] = None) -> None:
        prefix = self.name if prefix is None else prefix
        for i in range(self.num_layers):
            for key, target in ((f"{prefix}/W{i}", self.weights[i]), (f"{prefix}/b{i}", self.biases[i])):
                if key not in state:
                    raise KeyError(f"Missing tensor '{key}' in state")
                value = np.asarray(state[key], dtype=np.float64)
                if value.shape != target.shape:
                    raise DimensionMismatchError(key, target.shape, value.shape)
                target[...] = value

    def _check_inputs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.in_width:
            raise DimensionMismatchError(f"{self.name} input width", self.in_width, inputs.shape)
        if not np.all(np.isfinite(inputs)):
            raise NonFiniteError(f"{self.name}: non-finite network input")
        return inputs

    def forward(self, inputs: np.ndarray, tangents: Optional[np.ndarray] = None) -> NetTape:
        """
        Evaluate the network on a batch.

        Args:
            inputs: Array of shape (B, in)
            tangents: Optional input tangents of shape (B, D, in); their
                images are propagated alongside the values

        Returns:
            NetTape: The recorded forward pass
        """
        h = self._check_inputs(inputs)
        tape = NetTape(inputs=h)
        t = None
        if tangents is not None:
            t = np.asarray(tangents, dtype=np.float64)
            if t.ndim != 3 or t.shape[0] != h.shape[0] or t.shape[2] != self.in_width:
                raise DimensionMismatchError(f"{self.name} tangent shape", (h.shape[0], "D", self.in_width), t.shape)
            tape.tangents = t
        for w, b, kind in zip(self.weights, self.biases, self.activations):
            a = h @ w.T + b
            h, d1, d2 = _activation_derivatives(kind, a, self.beta)
            tape.pre.append(a)
            tape.post.append(h)
            tape.d1.append(d1)
            tape.d2.append(d2)
            if t is not None:
                s = t @ w.T
                t = s * d1[:, None, :]
                tape.tangent_pre.append(s)
                tape.tangent_post.append(t)
        return tape

    def backward(
        self,
        tape: NetTape,
        output_bar: np.ndarray,
        tangent_bar: Optional[np.ndarray] = None,
        need_params: bool = True,
    ) -> Tuple[Optional[NetGrads], np.ndarray, Optional[np.ndarray]]:
        """
        Reverse accumulation over a recorded tape.

        Args:
            tape: Tape from ``forward``
            output_bar: Cotangent of the output, shape (B, out)
            tangent_bar: Optional cotangent of the output tangents, (B, D, out)
            need_params: Whether parameter gradients are accumulated

        Returns:
            Tuple of parameter gradients (or None), input cotangent (B, in)
            and input-tangent cotangent (B, D, in) or None
        """
        h_bar = np.asarray(output_bar, dtype=np.float64)
        if h_bar.shape != tape.output.shape:
            raise DimensionMismatchError(f"{self.name} output cotangent", tape.output.shape, h_bar.shape)
        t_bar = None
        if tangent_bar is not None:
            if tape.tangents is None:
                raise ValueError("Tangent cotangents given but the tape holds no tangents")
            t_bar = np.asarray(tangent_bar, dtype=np.float64)
        grads = NetGrads.zeros_like(self) if need_params else None
        for layer in reversed(range(self.num_layers)):
            w = self.weights[layer]
            d1 = tape.d1[layer]
            a_bar = h_bar * d1
            s_bar = None
            if t_bar is not None:
                s = tape.tangent_pre[layer]
                s_bar = t_bar * d1[:, None, :]
                if self.activations[layer] != "identity":
                    a_bar = a_bar + np.einsum("bdo,bdo->bo", t_bar, s) * tape.d2[layer]
            h_prev = tape.inputs if layer == 0 else tape.post[layer - 1]
            if grads is not None:
                grads.weights[layer] += a_bar.T @ h_prev
                grads.biases[layer] += a_bar.sum(axis=0)
                if s_bar is not None:
                    t_prev = tape.tangents if layer == 0 else tape.tangent_post[layer - 1]
                    grads.weights[layer] += np.einsum("bdo,bdi->oi", s_bar, t_prev)
            h_bar = a_bar @ w
            if s_bar is not None:
                t_bar = s_bar @ w
        return grads, h_bar, t_bar

    def __call__(self, inputs: np.ndarray) -> np.ndarray:
        return self.forward(inputs).output

    def input_jacobian(self, inputs: np.ndarray, columns: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Output and Jacobian with respect to selected input columns.

        Returns:
            Tuple of outputs (B, out) and Jacobians (B, out, len(columns))
        """
        inputs = self._check_inputs(inputs)
        columns = list(range(self.in_width)) if columns is None else list(columns)
        seeds = np.zeros((inputs.shape[0], len(columns), self.in_width))
        seeds[:, np.arange(len(columns)), columns] = 1.0
        tape = self.forward(inputs, seeds)
        return tape.output, np.swapaxes(tape.output_tangents, 1, 2)


def net_eval_with_grad(net: DenseNet, x: np.ndarray, need: str = "value"):
    """
    Evaluate a network on a single input vector.

    Args:
        net: The network
        x: Input vector of width ``net.in_width``
        need: ``"value"``, ``"input_grad"`` or ``"param_grad"``

    Returns:
        Tuple of the output vector and the requested derivative: None for
        ``"value"``, the (out, in) Jacobian for ``"input_grad"``, and one
        NetGrads per output unit for ``"param_grad"``
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("input vector rank", 1, x.ndim)
    if need == "value":
        return net(x[None, :])[0], None
    if need == "input_grad":
        out, jac = net.input_jacobian(x[None, :])
        return out[0], jac[0]
    if need == "param_grad":
        tape = net.forward(x[None, :])
        rows = []
        for unit in range(net.out_width):
            bar = np.zeros((1, net.out_width))
            bar[0, unit] = 1.0
            grads, _, _ = net.backward(tape, bar)
            rows.append(grads)
        return tape.output[0], rows
    raise ValueError(f"Unknown derivative request '{need}'")
