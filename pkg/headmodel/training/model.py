"""
Trained model containers.

A model is a checkpoint file (network parameters, codes and optionally the
optimiser moments) plus a JSON sidecar with the configuration and stage
metadata. The sidecar of the identity model carries the ``trained`` flag the
expression stage checks before it starts.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from ..core.checkpoint import load_tensors, save_tensors
from ..errors import CheckpointError, DimensionMismatchError
from ..fields.expression import DeformationConfig, DeformationField, ExpressionCode
from ..fields.identity import EnsembleField, FieldConfig, IdentityCode
from ..geometry.io import load_json, save_json
from ..utils.config import config_from_dict, config_to_dict

logger = logging.getLogger(__name__)

STAGE_IDENTITY = "identity"
STAGE_EXPRESSION = "expression"


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def _require(state: Dict[str, np.ndarray], key: str, path: Path) -> np.ndarray:
    if key not in state:
        raise CheckpointError(f"{path}: missing tensor '{key}'")
    return np.asarray(state[key], dtype=np.float64)


def _check_shapes(expected: Dict[str, np.ndarray], state: Dict[str, np.ndarray], path: Path) -> None:
    for key, value in expected.items():
        stored = _require(state, key, path)
        if stored.shape != value.shape:
            raise DimensionMismatchError(f"{path}: tensor '{key}'", value.shape, stored.shape)


@dataclass
class IdentityModel:
    """
    Identity field with one code per training subject.

    Attributes:
        field: Identity field
        z_glob: Global latents (S, d_glob)
        z_loc: Local latents (S, K+1, d_loc)
        subject_ids: Subject names in code order
        trained: Set once the identity stage completed
        epoch: Completed epochs
        optim_state: Optimiser moments for resuming
    """

    field: EnsembleField
    z_glob: np.ndarray
    z_loc: np.ndarray
    subject_ids: List[str]
    trained: bool = False
    epoch: int = 0
    optim_state: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, config: FieldConfig, subject_ids: List[str], rng: np.random.Generator, init_std: float = 0.01) -> "IdentityModel":
        ensemble = EnsembleField(config, rng=rng)
        s = len(subject_ids)
        z_glob = init_std * rng.standard_normal((s, config.d_glob))
        z_loc = init_std * rng.standard_normal((s, config.num_anchors + 1, config.d_loc))
        return cls(ensemble, z_glob, z_loc, list(subject_ids))

    @property
    def config(self) -> FieldConfig:
        return self.field.config

    @property
    def num_subjects(self) -> int:
        return len(self.subject_ids)

    def code(self, index: int) -> IdentityCode:
        """Code of subject ``index`` with predicted anchors."""
        return self.field.complete(IdentityCode(self.z_glob[index].copy(), self.z_loc[index].copy()))

    def codes(self) -> List[IdentityCode]:
        return [self.code(i) for i in range(self.num_subjects)]

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = dict(self.field.state_dict())
        state["codes/z_glob"] = self.z_glob
        state["codes/z_loc"] = self.z_loc
        state.update(self.optim_state)
        return state

    def metadata(self) -> Dict:
        return {
            "stage": STAGE_IDENTITY,
            "trained": self.trained,
            "epoch": self.epoch,
            "field": self.field.to_json(),
            "subject_ids": self.subject_ids,
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = save_tensors(path, self.state_dict())
        save_json(sidecar_path(path), self.metadata())
        logger.debug("Saved identity model to %s (epoch %d)", path, self.epoch)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "IdentityModel":
        """
        Raises:
            FileNotFoundError: Missing checkpoint or sidecar
            CheckpointError: Malformed checkpoint or wrong stage
            DimensionMismatchError: Stored tensors disagree with the stored configuration
        """
        path = Path(path)
        meta = load_json(sidecar_path(path))
        if meta.get("stage") != STAGE_IDENTITY:
            raise CheckpointError(f"{path} is not an identity checkpoint (stage {meta.get('stage')!r})")
        config = config_from_dict(FieldConfig, meta["field"]["config"], section="field")
        state = load_tensors(path)
        model = cls.create(config, meta["subject_ids"], np.random.default_rng(0))
        _check_shapes(model.state_dict(), state, path)
        model.field.load_state_dict(state)
        model.z_glob = _require(state, "codes/z_glob", path)
        model.z_loc = _require(state, "codes/z_loc", path)
        model.trained = bool(meta.get("trained", False))
        model.epoch = int(meta.get("epoch", 0))
        model.optim_state = {k: np.asarray(v, dtype=np.float64) for k, v in state.items() if k.startswith("optim/")}
        return model


@dataclass
class ExpressionModel:
    """
    Deformation field with one expression code per (subject, expression) pair.

    Attributes:
        defo: Deformation field
        z_ex: Expression latents (P, d_ex)
        pairs: ``(subject index, expression index)`` per code row
        trained: Set once the expression stage completed
        epoch: Completed epochs
        optim_state: Optimiser moments for resuming
    """

    defo: DeformationField
    z_ex: np.ndarray
    pairs: List[List[int]]
    trained: bool = False
    epoch: int = 0
    optim_state: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        config: DeformationConfig,
        field_config: FieldConfig,
        pairs: List[List[int]],
        rng: np.random.Generator,
        init_std: float = 0.01,
    ) -> "ExpressionModel":
        defo = DeformationField(config, field_config, rng=rng)
        z_ex = init_std * rng.standard_normal((len(pairs), config.d_ex))
        return cls(defo, z_ex, [list(map(int, p)) for p in pairs])

    @property
    def config(self) -> DeformationConfig:
        return self.defo.config

    def code(self, row: int) -> ExpressionCode:
        return ExpressionCode(self.z_ex[row].copy())

    def row(self, subject_index: int, expression_index: int) -> int:
        try:
            return self.pairs.index([int(subject_index), int(expression_index)])
        except ValueError:
            raise KeyError(f"No expression code for subject {subject_index}, expression {expression_index}") from None

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = dict(self.defo.state_dict())
        state["codes/z_ex"] = self.z_ex
        state.update(self.optim_state)
        return state

    def metadata(self) -> Dict:
        return {
            "stage": STAGE_EXPRESSION,
            "trained": self.trained,
            "epoch": self.epoch,
            "deformation": config_to_dict(self.defo.config),
            "field": config_to_dict(self.defo.field_config),
            "pairs": self.pairs,
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = save_tensors(path, self.state_dict())
        save_json(sidecar_path(path), self.metadata())
        logger.debug("Saved expression model to %s (epoch %d)", path, self.epoch)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExpressionModel":
        path = Path(path)
        meta = load_json(sidecar_path(path))
        if meta.get("stage") != STAGE_EXPRESSION:
            raise CheckpointError(f"{path} is not an expression checkpoint (stage {meta.get('stage')!r})")
        config = config_from_dict(DeformationConfig, meta["deformation"], section="deformation")
        field_config = config_from_dict(FieldConfig, meta["field"], section="field")
        state = load_tensors(path)
        model = cls.create(config, field_config, meta["pairs"], np.random.default_rng(0))
        _check_shapes(model.state_dict(), state, path)
        model.defo.load_state_dict(state)
        model.z_ex = _require(state, "codes/z_ex", path)
        model.trained = bool(meta.get("trained", False))
        model.epoch = int(meta.get("epoch", 0))
        model.optim_state = {k: np.asarray(v, dtype=np.float64) for k, v in state.items() if k.startswith("optim/")}
        return model


def check_compatible(identity: IdentityModel, expression: ExpressionModel) -> None:
    """Raise DimensionMismatchError when the two stages were built for different identity fields."""
    a, b = identity.config, expression.defo.field_config
    for name in ("num_anchors", "d_glob", "d_loc"):
        if getattr(a, name) != getattr(b, name):
            raise DimensionMismatchError(f"identity field {name}", getattr(b, name), getattr(a, name))
