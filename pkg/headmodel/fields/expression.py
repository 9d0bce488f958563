"""
Expression Field

Forward deformation from canonical to posed space. A network predicts a
displacement for a canonical point given an expression latent and a compact
identity summary; the summary is a bias-free linear projection of the
identity latents and anchors. The output layer starts at zero, so every
expression code maps canonical space onto itself at initialisation.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.dense import DenseNet, NetGrads, NetTape
from ..errors import ConfigError, DimensionMismatchError, NonFiniteError
from .identity import CodeGrads, FieldConfig, IdentityCode

logger = logging.getLogger(__name__)


@dataclass
class DeformationConfig:
    """
    Architecture of the deformation field.

    Attributes:
        d_ex: Width of the expression latent
        d_id_ex: Width of the projected identity summary
        hidden_width: Units per hidden layer
        hidden_layers: Number of hidden layers (0 gives an affine field)
    """

    d_ex: int = 200
    d_id_ex: int = 64
    hidden_width: int = 512
    hidden_layers: int = 6


@dataclass
class ExpressionCode:
    z_ex: np.ndarray

    @classmethod
    def zeros(cls, config: DeformationConfig) -> "ExpressionCode":
        return cls(np.zeros(config.d_ex))

    def copy(self) -> "ExpressionCode":
        return ExpressionCode(self.z_ex.copy())

    def to_dict(self) -> Dict:
        return {"z_ex": self.z_ex.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "ExpressionCode":
        return cls(np.asarray(data["z_ex"], dtype=np.float64))


@dataclass
class DeformEval:
    """Displacements and, optionally, Jacobians of the posed-point map."""

    tape: NetTape
    displacements: np.ndarray
    jacobians: Optional[np.ndarray] = None

    @property
    def posed(self) -> np.ndarray:
        return self.tape.inputs[:, :3] + self.displacements


class DeformationField:
    """
    Deformation network plus the identity projection matrix.

    Args:
        config: Deformation architecture
        field_config: Identity architecture, which fixes the projection input width
        rng: Generator for the weight initialisation
    """

    def __init__(self, config: DeformationConfig, field_config: FieldConfig, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        if config.d_id_ex >= field_config.d_id:
            raise ConfigError(f"d_id_ex ({config.d_id_ex}) must be smaller than d_id ({field_config.d_id})")
        self.config = config
        self.field_config = field_config
        k = field_config.num_anchors
        self.projection_width = field_config.d_glob + (k + 1) * field_config.d_loc + 3 * k
        widths = [3 + config.d_ex + config.d_id_ex] + [config.hidden_width] * config.hidden_layers + [3]
        self.net = DenseNet(widths, rng=rng, name="expression/deformation")
        self.net.zero_output_layer()
        bound = 1.0 / np.sqrt(self.projection_width)
        self.projection = rng.uniform(-bound, bound, size=(config.d_id_ex, self.projection_width))

    def parameters(self) -> List[np.ndarray]:
        return self.net.parameters() + [self.projection]

    def nets(self) -> Dict[str, DenseNet]:
        return {"deformation": self.net}

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = self.net.state_dict()
        state["expression/projection"] = self.projection
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        self.net.load_state_dict(state)
        value = np.asarray(state["expression/projection"], dtype=np.float64)
        if value.shape != self.projection.shape:
            raise DimensionMismatchError("expression/projection", self.projection.shape, value.shape)
        self.projection[...] = value

    # -- identity projection -----------------------------------------

    def project(self, code: IdentityCode) -> np.ndarray:
        vector = code.projection_input()
        if vector.size != self.projection_width:
            raise DimensionMismatchError("identity projection input", self.projection_width, vector.size)
        return self.projection @ vector

    def project_backward(self, code: IdentityCode, summary_bar: np.ndarray) -> Tuple[np.ndarray, CodeGrads]:
        """
        Cotangents of the projection matrix and of the identity code.

        Returns:
            Tuple of the projection-matrix gradient and the code cotangents
        """
        vector = code.projection_input()
        summary_bar = np.asarray(summary_bar, dtype=np.float64)
        projection_bar = np.outer(summary_bar, vector)
        vector_bar = self.projection.T @ summary_bar
        d_glob = code.z_glob.size
        n_loc = code.z_loc.size
        grads = CodeGrads(
            vector_bar[:d_glob].copy(),
            vector_bar[d_glob:d_glob + n_loc].reshape(code.z_loc.shape),
            vector_bar[d_glob + n_loc:].reshape(-1, 3),
        )
        return projection_bar, grads

    # -- deformation -------------------------------------------------

    def _inputs(self, x: np.ndarray, z_ex: np.ndarray, summary: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != 3:
            raise DimensionMismatchError("canonical points", "(B, 3)", x.shape)
        z_ex = np.asarray(z_ex, dtype=np.float64)
        summary = np.asarray(summary, dtype=np.float64)
        if z_ex.shape != (self.config.d_ex,):
            raise DimensionMismatchError("z_ex width", self.config.d_ex, z_ex.shape)
        if summary.shape != (self.config.d_id_ex,):
            raise DimensionMismatchError("identity summary width", self.config.d_id_ex, summary.shape)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z_ex)) and np.all(np.isfinite(summary))):
            raise NonFiniteError("Non-finite deformation input")
        n = x.shape[0]
        return np.concatenate([x, np.broadcast_to(z_ex, (n, z_ex.size)), np.broadcast_to(summary, (n, summary.size))], axis=1)

    def forward(self, x: np.ndarray, z_ex: np.ndarray, summary: np.ndarray, with_jacobian: bool = False) -> DeformEval:
        inputs = self._inputs(x, z_ex, summary)
        seed = None
        if with_jacobian:
            seed = np.zeros((inputs.shape[0], 3, inputs.shape[1]))
            seed[:, [0, 1, 2], [0, 1, 2]] = 1.0
        tape = self.net.forward(inputs, seed)
        jacobians = None
        if with_jacobian:
            jacobians = np.eye(3)[None, :, :] + np.swapaxes(tape.output_tangents, 1, 2)
        return DeformEval(tape, tape.output, jacobians)

    def backward(
        self,
        evaluation: DeformEval,
        displacement_bar: np.ndarray,
        jacobian_bar: Optional[np.ndarray] = None,
        need_params: bool = True,
    ) -> Tuple[Optional[NetGrads], np.ndarray, np.ndarray, np.ndarray]:
        """
        Reverse pass for cotangents of displacements and (optionally) Jacobians.

        Returns:
            Tuple of network gradients (or None), point cotangents (B, 3),
            ``z_ex`` cotangent and identity-summary cotangent
        """
        tangent_bar = None
        if jacobian_bar is not None:
            tangent_bar = np.swapaxes(np.asarray(jacobian_bar, dtype=np.float64), 1, 2)
        grads, input_bar, _ = self.net.backward(evaluation.tape, displacement_bar, tangent_bar, need_params)
        d_ex = self.config.d_ex
        return grads, input_bar[:, :3], input_bar[:, 3:3 + d_ex].sum(axis=0), input_bar[:, 3 + d_ex:].sum(axis=0)


def project_identity(defo: DeformationField, code: IdentityCode) -> np.ndarray:
    """Identity summary ``W [z_glob, z_0..z_K, a_1..a_K]``."""
    return defo.project(code)


def deform_point(defo: DeformationField, x: np.ndarray, z_ex: np.ndarray, summary: np.ndarray) -> np.ndarray:
    """Displacement (3,) or (B, 3) of canonical point(s); the posed point is ``x + delta``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = defo.forward(np.atleast_2d(x), z_ex, summary).displacements
    return out[0] if single else out


def deform_jacobian(defo: DeformationField, x: np.ndarray, z_ex: np.ndarray, summary: np.ndarray) -> np.ndarray:
    """Jacobian ``I + d(delta)/dx`` of the posed-point map, (3, 3) or (B, 3, 3)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = defo.forward(np.atleast_2d(x), z_ex, summary, with_jacobian=True).jacobians
    return out[0] if single else out
