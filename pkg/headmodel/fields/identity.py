"""
Identity Field

A locally decomposed signed distance function in canonical space. Every
anchor owns a small network evaluated in the anchor's local frame, a global
network covers the background, and the local predictions are blended with
normalised kernel weights centred at the anchors. Anchors themselves are
predicted from the global latent by a separate network.

With symmetric sharing enabled, a right anchor reuses the network of its
left partner on mirrored local coordinates, and the on-axis and global
networks are averaged over the mirror image of their spatial input. The
resulting field is exactly mirror equivariant: mirroring the query, swapping
the partner latents and reflecting the anchors leaves the value unchanged.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.dense import DenseNet, NetGrads
from ..errors import DimensionMismatchError, NonFiniteError
from ..utils.config import config_to_dict
from .layout import AnchorLayout, flip

logger = logging.getLogger(__name__)

# Keeps the kernel distance differentiable when a query coincides with an anchor.
DISTANCE_EPS = 1e-12


@dataclass
class FieldConfig:
    """
    Architecture of an identity field.

    Attributes:
        num_anchors: K, one of the built-in layouts (0, 1, 5, 9, 39)
        d_glob: Width of the global latent
        d_loc: Width of every local latent
        hidden_width: Units per hidden layer of local and global networks
        hidden_layers: Hidden layers of local and global networks
        anchor_hidden_width: Units per hidden layer of the anchor network
        anchor_hidden_layers: Hidden layers of the anchor network
        sigma: Kernel scale of the blending weights
        blend_const: Background weight c; ``exp(-0.2 / sigma**2)`` when unset
        share_symmetric: Share networks across mirror pairs
        geometric_init_radius: Sphere initialisation radius for the global network
    """

    num_anchors: int = 39
    d_glob: int = 64
    d_loc: int = 32
    hidden_width: int = 200
    hidden_layers: int = 4
    anchor_hidden_width: int = 128
    anchor_hidden_layers: int = 2
    sigma: float = 0.1
    blend_const: Optional[float] = None
    share_symmetric: bool = True
    geometric_init_radius: Optional[float] = None

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.blend_const is not None and self.blend_const <= 0.0:
            raise ValueError(f"blend_const must be positive, got {self.blend_const}")

    @property
    def d_id(self) -> int:
        return (self.num_anchors + 1) * self.d_loc + self.d_glob

    @property
    def background_weight(self) -> float:
        if self.blend_const is not None:
            return float(self.blend_const)
        return float(np.exp(-0.2 / self.sigma ** 2))


@dataclass
class IdentityCode:
    """
    Latent description of one identity.

    Attributes:
        z_glob: Global latent (d_glob,)
        z_loc: Local latents (K+1, d_loc); row 0 conditions the global network
        anchors: Predicted anchors (K, 3), or None before prediction
    """

    z_glob: np.ndarray
    z_loc: np.ndarray
    anchors: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, config: FieldConfig) -> "IdentityCode":
        return cls(np.zeros(config.d_glob), np.zeros((config.num_anchors + 1, config.d_loc)))

    @property
    def num_anchors(self) -> int:
        return self.z_loc.shape[0] - 1

    def latent_vector(self) -> np.ndarray:
        """``[z_glob, z_0, ..., z_K]`` of length d_id."""
        return np.concatenate([self.z_glob, self.z_loc.ravel()])

    def projection_input(self) -> np.ndarray:
        """``[z_glob, z_0, ..., z_K, a_1, ..., a_K]``."""
        if self.anchors is None:
            raise ValueError("Identity code has no anchors; call predict_anchors first")
        return np.concatenate([self.z_glob, self.z_loc.ravel(), self.anchors.ravel()])

    def copy(self) -> "IdentityCode":
        return IdentityCode(
            self.z_glob.copy(),
            self.z_loc.copy(),
            None if self.anchors is None else self.anchors.copy(),
        )

    def to_dict(self) -> Dict:
        return {
            "z_glob": self.z_glob.tolist(),
            "z_loc": self.z_loc.tolist(),
            "anchors": None if self.anchors is None else self.anchors.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "IdentityCode":
        anchors = data.get("anchors")
        return cls(
            np.asarray(data["z_glob"], dtype=np.float64),
            np.asarray(data["z_loc"], dtype=np.float64),
            None if anchors is None else np.asarray(anchors, dtype=np.float64).reshape(-1, 3),
        )


@dataclass
class CodeGrads:
    """Cotangents of an identity code and of the query points."""

    z_glob: np.ndarray
    z_loc: np.ndarray
    anchors: np.ndarray
    points: Optional[np.ndarray] = None


@dataclass
class FieldEval:
    """Blended field values plus everything the backward pass reuses."""

    points: np.ndarray
    values: np.ndarray
    gradients: Optional[np.ndarray]
    local_values: np.ndarray
    local_gradients: Optional[np.ndarray]
    weights: np.ndarray
    kernel_grads: np.ndarray
    directions: np.ndarray
    distances: np.ndarray


@dataclass
class _Branch:
    """One network evaluation contributing to a region's value."""

    net: DenseNet
    sign: float
    scale: float


def _blend(anchors: np.ndarray, x: np.ndarray, sigma: float, c: float):
    """
    Normalised kernel weights in log space.

    Returns:
        weights (B, K+1), kernel gradients g = grad log w* (B, K+1, 3),
        unit directions u (B, K, 3) and distances r (B, K)
    """
    d = x[:, None, :] - anchors[None, :, :]
    r = np.sqrt(np.sum(d * d, axis=-1) + DISTANCE_EPS)
    u = d / r[..., None]
    logits = np.concatenate([np.full((x.shape[0], 1), np.log(c)), -r / (2.0 * sigma)], axis=1)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    g = np.zeros((x.shape[0], anchors.shape[0] + 1, 3))
    g[:, 1:, :] = -u / (2.0 * sigma)
    return w, g, u, r


def blend_weights(anchors: np.ndarray, x: np.ndarray, sigma: float, c: float) -> np.ndarray:
    """
    Blending weights of the global field and every anchor.

    Args:
        anchors: Anchor positions (K, 3)
        x: Query point (3,) or points (B, 3)
        sigma: Kernel scale
        c: Background weight before normalisation

    Returns:
        Weights of shape (K+1,) or (B, K+1) that sum to one; entry 0 is the background
    """
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    w, _, _, _ = _blend(np.asarray(anchors, dtype=np.float64).reshape(-1, 3), np.atleast_2d(x), sigma, c)
    return w[0] if single else w


class EnsembleField:
    """
    Ensemble of anchored local networks, a global network and the anchor
    network.

    Args:
        config: Architecture
        layout: Anchor layout; the built-in layout with ``config.num_anchors`` by default
        rng: Generator for the weight initialisation
    """

    def __init__(self, config: FieldConfig, layout: Optional[AnchorLayout] = None, rng: Optional[np.random.Generator] = None):
        self.config = config
        self.layout = layout if layout is not None else AnchorLayout.builtin(config.num_anchors)
        if self.layout.num_anchors != config.num_anchors:
            raise DimensionMismatchError("layout anchor count", config.num_anchors, self.layout.num_anchors)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sigma = float(config.sigma)
        self.blend_const = config.background_weight

        in_width = 3 + config.d_glob + config.d_loc
        widths = [in_width] + [config.hidden_width] * config.hidden_layers + [1]
        self.global_net = DenseNet(widths, rng=rng, name="identity/global")
        if config.geometric_init_radius is not None:
            self.global_net.geometric_init(config.geometric_init_radius, rng)

        self.region_nets: List[DenseNet] = []
        self.region_slot = np.zeros(self.layout.num_anchors, dtype=int)
        self.mirrored = np.zeros(self.layout.num_anchors, dtype=bool)
        for row in range(self.layout.num_anchors):
            if config.share_symmetric and row in self.layout.right:
                partner = self.layout.partner(row)
                self.region_slot[row] = self.region_slot[partner]
                self.mirrored[row] = True
                continue
            self.region_slot[row] = len(self.region_nets)
            self.region_nets.append(DenseNet(widths, rng=rng, name=f"identity/region{len(self.region_nets)}"))

        self.anchor_net: Optional[DenseNet] = None
        if self.layout.num_anchors > 0:
            anchor_widths = [config.d_glob] + [config.anchor_hidden_width] * config.anchor_hidden_layers + [3 * self.layout.num_anchors]
            self.anchor_net = DenseNet(anchor_widths, rng=rng, name="identity/anchors")
            self.anchor_net.weights[-1] *= 0.1
            self.anchor_net.biases[-1][...] = np.asarray(self.layout.reference).ravel()

    # -- parameters -----------------------------------------------------

    @property
    def num_anchors(self) -> int:
        return self.layout.num_anchors

    def nets(self) -> Dict[str, DenseNet]:
        """All networks by name, in parameter order."""
        out = {"global": self.global_net}
        for i, net in enumerate(self.region_nets):
            out[f"region{i}"] = net
        if self.anchor_net is not None:
            out["anchors"] = self.anchor_net
        return out

    def parameters(self) -> List[np.ndarray]:
        params = []
        for net in self.nets().values():
            params.extend(net.parameters())
        return params

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grads(self) -> Dict[str, NetGrads]:
        return {name: NetGrads.zeros_like(net) for name, net in self.nets().items()}

    def grads_as_list(self, grads: Dict[str, NetGrads]) -> List[np.ndarray]:
        """Flatten named gradients in the order of ``parameters``."""
        out = []
        for name, net in self.nets().items():
            out.extend(grads[name].as_list() if name in grads else [np.zeros_like(p) for p in net.parameters()])
        return out

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {}
        for net in self.nets().values():
            state.update(net.state_dict())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for net in self.nets().values():
            net.load_state_dict(state)

    def to_json(self) -> Dict:
        """Configuration, layout and blending constants as a JSON document."""
        return {
            "config": config_to_dict(self.config),
            "layout": self.layout.to_dict(),
            "sigma": self.sigma,
            "blend_const": self.blend_const,
            "d_id": self.config.d_id,
        }

    # -- region structure -----------------------------------------------

    def _branches(self, k: int) -> List[_Branch]:
        """
        Network evaluations summed into region ``k``. With sharing on, the
        global and on-axis regions average their net over the input and its
        mirror image, so those regions are themselves mirror symmetric.
        """
        if k < 0 or k > self.num_anchors:
            raise IndexError(f"Region index {k} out of range [0, {self.num_anchors}]")
        symmetric = self.config.share_symmetric
        if k == 0:
            net = self.global_net
        else:
            row = k - 1
            net = self.region_nets[self.region_slot[row]]
            if self.mirrored[row]:
                return [_Branch(net, -1.0, 1.0)]
            if not symmetric or row not in self.layout.middle:
                return [_Branch(net, 1.0, 1.0)]
        if symmetric:
            return [_Branch(net, 1.0, 0.5), _Branch(net, -1.0, 0.5)]
        return [_Branch(net, 1.0, 1.0)]

    def _check_code(self, code: IdentityCode) -> None:
        if code.z_glob.shape != (self.config.d_glob,):
            raise DimensionMismatchError("z_glob shape", (self.config.d_glob,), code.z_glob.shape)
        expected = (self.num_anchors + 1, self.config.d_loc)
        if code.z_loc.shape != expected:
            raise DimensionMismatchError("z_loc shape", expected, code.z_loc.shape)
        if code.anchors is None:
            raise ValueError("Identity code has no anchors; call predict_anchors first")
        if code.anchors.shape != (self.num_anchors, 3):
            raise DimensionMismatchError("anchor shape", (self.num_anchors, 3), code.anchors.shape)

    @staticmethod
    def _check_points(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != 3:
            raise DimensionMismatchError("query points", "(B, 3)", x.shape)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("Non-finite query points")
        return x

    def _branch_inputs(self, branch: _Branch, local: np.ndarray, z_glob: np.ndarray, z_k: np.ndarray) -> np.ndarray:
        spatial = local if branch.sign > 0 else flip(local)
        n = local.shape[0]
        return np.concatenate([spatial, np.broadcast_to(z_glob, (n, z_glob.size)), np.broadcast_to(z_k, (n, z_k.size))], axis=1)

    def _seed(self, branch: _Branch, n: int, in_width: int) -> np.ndarray:
        seed = np.zeros((n, 3, in_width))
        seed[:, 0, 0] = branch.sign
        seed[:, 1, 1] = 1.0
        seed[:, 2, 2] = 1.0
        return seed

    def _local_offsets(self, k: int, x: np.ndarray, anchors: np.ndarray) -> np.ndarray:
        return x if k == 0 else x - anchors[k - 1]

    # -- evaluation -----------------------------------------------------

    def local_forward(self, k: int, x: np.ndarray, z_glob: np.ndarray, z_k: np.ndarray, anchors: np.ndarray, with_gradient: bool = False):
        """
        Value (B,) and optional spatial gradient (B, 3) of region ``k``.
        """
        local = self._local_offsets(k, x, anchors)
        value = np.zeros(x.shape[0])
        gradient = np.zeros((x.shape[0], 3)) if with_gradient else None
        for branch in self._branches(k):
            inputs = self._branch_inputs(branch, local, z_glob, z_k)
            seed = self._seed(branch, x.shape[0], branch.net.in_width) if with_gradient else None
            tape = branch.net.forward(inputs, seed)
            value += branch.scale * tape.output[:, 0]
            if with_gradient:
                gradient += branch.scale * tape.output_tangents[:, :, 0]
        return value, gradient

    def forward(self, code: IdentityCode, x: np.ndarray, with_gradient: bool = True) -> FieldEval:
        """
        Evaluate the blended field on a batch of points.

        Args:
            code: Identity code with anchors
            x: Points (B, 3)
            with_gradient: Also compute the spatial gradient

        Returns:
            FieldEval: Values, gradients and the blending intermediates
        """
        self._check_code(code)
        x = self._check_points(x)
        n, k_total = x.shape[0], self.num_anchors + 1
        local_values = np.zeros((n, k_total))
        local_gradients = np.zeros((n, k_total, 3)) if with_gradient else None
        for k in range(k_total):
            value, gradient = self.local_forward(k, x, code.z_glob, code.z_loc[k], code.anchors, with_gradient)
            local_values[:, k] = value
            if with_gradient:
                local_gradients[:, k] = gradient
        w, g, u, r = _blend(code.anchors, x, self.sigma, self.blend_const)
        values = np.sum(w * local_values, axis=1)
        gradients = None
        if with_gradient:
            g_mean = np.einsum("bk,bkd->bd", w, g)
            gradients = np.einsum("bk,bkd->bd", w, local_gradients)
            gradients += np.einsum("bk,bkd->bd", w * local_values, g - g_mean[:, None, :])
        return FieldEval(x, values, gradients, local_values, local_gradients, w, g, u, r)

    def backward(
        self,
        code: IdentityCode,
        evaluation: FieldEval,
        value_bar: np.ndarray,
        gradient_bar: Optional[np.ndarray] = None,
        need_params: bool = True,
    ) -> Tuple[Optional[Dict[str, NetGrads]], CodeGrads]:
        """
        Reverse pass for cotangents of the values and spatial gradients.

        Each network's tape is recomputed just before its reverse pass, so
        only one tape is alive at a time.

        Args:
            code: The code used in ``forward``
            evaluation: Result of ``forward``
            value_bar: Cotangent of the values (B,)
            gradient_bar: Cotangent of the spatial gradients (B, 3); requires
                ``forward(..., with_gradient=True)``
            need_params: Accumulate network parameter gradients

        Returns:
            Tuple of network gradients (anchor network excluded; see
            ``anchor_backward``) and code/point cotangents
        """
        x = evaluation.points
        n, k_total = x.shape[0], self.num_anchors + 1
        value_bar = np.asarray(value_bar, dtype=np.float64).reshape(n)
        if gradient_bar is not None and evaluation.local_gradients is None:
            raise ValueError("Spatial gradient cotangent given but the forward pass skipped gradients")

        w, g = evaluation.weights, evaluation.kernel_grads
        f = evaluation.local_values
        F = evaluation.values
        local_value_bar = w * value_bar[:, None]
        w_bar = f * value_bar[:, None]
        local_gradient_bar = None
        g_bar = np.zeros_like(g)
        if gradient_bar is not None:
            Gb = np.asarray(gradient_bar, dtype=np.float64).reshape(n, 3)
            grad_f = evaluation.local_gradients
            g_mean = np.einsum("bk,bkd->bd", w, g)
            gb_dot_g = np.einsum("bd,bkd->bk", Gb, g)
            gb_dot_gmean = np.sum(Gb * g_mean, axis=1)
            local_gradient_bar = w[:, :, None] * Gb[:, None, :]
            local_value_bar += w * (gb_dot_g - gb_dot_gmean[:, None])
            w_bar += np.einsum("bd,bkd->bk", Gb, grad_f)
            w_bar += f * (gb_dot_g - gb_dot_gmean[:, None])
            w_bar -= F[:, None] * gb_dot_g
            g_bar += (w * (f - F[:, None]))[:, :, None] * Gb[:, None, :]

        logit_bar = w * (w_bar - np.sum(w * w_bar, axis=1, keepdims=True))
        u, r = evaluation.directions, evaluation.distances
        gc = g_bar[:, 1:, :]
        offset_bar = logit_bar[:, 1:, None] * g[:, 1:, :]
        tangential = gc - np.sum(u * gc, axis=-1, keepdims=True) * u
        offset_bar -= tangential / (2.0 * self.sigma * r[..., None])

        points_bar = offset_bar.sum(axis=1)
        anchors_bar = -offset_bar.sum(axis=0)
        z_glob_bar = np.zeros_like(code.z_glob)
        z_loc_bar = np.zeros_like(code.z_loc)
        net_grads: Optional[Dict[str, NetGrads]] = None
        if need_params:
            net_grads = {name: NetGrads.zeros_like(net) for name, net in self.nets().items() if name != "anchors"}
        names = {id(net): name for name, net in self.nets().items()}

        d_glob = self.config.d_glob
        for k in range(k_total):
            local = self._local_offsets(k, x, code.anchors)
            for branch in self._branches(k):
                inputs = self._branch_inputs(branch, local, code.z_glob, code.z_loc[k])
                seed = self._seed(branch, n, branch.net.in_width) if local_gradient_bar is not None else None
                tape = branch.net.forward(inputs, seed)
                tangent_bar = None
                if local_gradient_bar is not None:
                    tangent_bar = branch.scale * local_gradient_bar[:, k, :, None]
                grads, input_bar, _ = branch.net.backward(tape, branch.scale * local_value_bar[:, k:k + 1], tangent_bar, need_params)
                if need_params:
                    net_grads[names[id(branch.net)]].add_(grads)
                spatial_bar = input_bar[:, :3]
                if branch.sign < 0:
                    spatial_bar = flip(spatial_bar)
                points_bar += spatial_bar
                if k > 0:
                    anchors_bar[k - 1] -= spatial_bar.sum(axis=0)
                z_glob_bar += input_bar[:, 3:3 + d_glob].sum(axis=0)
                z_loc_bar[k] += input_bar[:, 3 + d_glob:].sum(axis=0)
        return net_grads, CodeGrads(z_glob_bar, z_loc_bar, anchors_bar, points_bar)

    # -- anchors --------------------------------------------------------

    def predict_anchors(self, z_glob: np.ndarray) -> np.ndarray:
        z_glob = np.asarray(z_glob, dtype=np.float64)
        if z_glob.shape != (self.config.d_glob,):
            raise DimensionMismatchError("z_glob width", self.config.d_glob, z_glob.shape)
        if self.anchor_net is None:
            return np.zeros((0, 3))
        return self.anchor_net(z_glob[None, :])[0].reshape(self.num_anchors, 3)

    def anchor_backward(self, z_glob: np.ndarray, anchors_bar: np.ndarray, need_params: bool = True) -> Tuple[Optional[NetGrads], np.ndarray]:
        """Chain anchor cotangents (K, 3) into the anchor network and ``z_glob``."""
        if self.anchor_net is None:
            return None, np.zeros_like(z_glob)
        tape = self.anchor_net.forward(np.asarray(z_glob, dtype=np.float64)[None, :])
        grads, z_bar, _ = self.anchor_net.backward(tape, np.asarray(anchors_bar).reshape(1, -1), need_params=need_params)
        return grads, z_bar[0]

    def complete(self, code: IdentityCode) -> IdentityCode:
        """Copy of ``code`` with freshly predicted anchors."""
        completed = code.copy()
        completed.anchors = self.predict_anchors(code.z_glob)
        return completed


# -- functional interface ----------------------------------------------------


def predict_anchors(field: EnsembleField, z_glob: np.ndarray) -> np.ndarray:
    """Anchor positions (K, 3) predicted from the global latent."""
    return field.predict_anchors(z_glob)


def local_sdf_eval(field: EnsembleField, k: int, x: np.ndarray, z_glob: np.ndarray, z_k: np.ndarray, anchors: np.ndarray):
    """
    Contribution of region ``k`` at ``x`` (a point or a batch of points).

    Region 0 is the global network on unshifted coordinates; region k > 0
    evaluates its network on ``x - a_k``, mirrored for right anchors.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    points = field._check_points(np.atleast_2d(x))
    value, _ = field.local_forward(k, points, np.asarray(z_glob, dtype=np.float64), np.asarray(z_k, dtype=np.float64), np.asarray(anchors, dtype=np.float64).reshape(-1, 3))
    return float(value[0]) if single else value


def identity_sdf_eval(field: EnsembleField, code: IdentityCode, x: np.ndarray):
    """Blended signed distance at a point (float) or a batch of points (B,)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    values = field.forward(code, np.atleast_2d(x), with_gradient=False).values
    return float(values[0]) if single else values


def identity_sdf_gradient(field: EnsembleField, code: IdentityCode, x: np.ndarray) -> np.ndarray:
    """Spatial gradient (3,) or (B, 3) of the blended signed distance."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    gradients = field.forward(code, np.atleast_2d(x), with_gradient=True).gradients
    return gradients[0] if single else gradients


def mirror_code(layout: AnchorLayout, code: IdentityCode) -> IdentityCode:
    """Swap partner latents and reflect the anchors."""
    z_loc = code.z_loc.copy()
    permutation = layout.permutation()
    z_loc[1:] = code.z_loc[1:][permutation]
    anchors = None if code.anchors is None else layout.mirror_anchors(code.anchors)
    return IdentityCode(code.z_glob.copy(), z_loc, anchors)


def symmetry_penalty(layout: AnchorLayout, z_loc: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Sum of squared differences between partner latents and its gradient.

    Args:
        layout: Anchor layout
        z_loc: Local latents (K+1, d_loc)

    Returns:
        Tuple of the penalty and its gradient with respect to ``z_loc``
    """
    grad = np.zeros_like(z_loc)
    value = 0.0
    for left, right in zip(layout.left, layout.right):
        diff = z_loc[left + 1] - z_loc[right + 1]
        value += float(np.dot(diff, diff))
        grad[left + 1] += 2.0 * diff
        grad[right + 1] -= 2.0 * diff
    return value, grad

