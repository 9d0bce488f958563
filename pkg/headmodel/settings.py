"""
Run configuration.

A run document bundles the seed, worker count, data and output locations and
one section per component config. Values given on the command line override
the document.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .errors import ConfigError
from .fields.expression import DeformationConfig
from .fields.identity import FieldConfig
from .fitting.codes import FitConfig
from .fitting.tracking import TrackConfig
from .geometry.metrics import MetricsConfig
from .registration.template import RegistrationConfig
from .synthetic.shapes import SyntheticConfig
from .training.expression import ExpressionTrainConfig
from .training.identity import IdentityTrainConfig
from .utils.config import config_from_dict, config_to_dict, load_config_file

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DATA_DIR_ENV = "NPHM_DATA_DIR"
DEFAULT_DATA_DIR = "data"
DEFAULT_OUT_DIR = "runs"


@dataclass
class RunConfig:
    """
    Top-level run document.

    Attributes:
        schema_version: Document version; only ``SCHEMA_VERSION`` is accepted
        seed: Root seed of every generator in the run
        threads: Worker threads of parallel stages
        data_dir: Data set root; ``$NPHM_DATA_DIR`` or ``data`` when unset
        out_dir: Output root of trained models, fits and reports
    """

    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    threads: int = 1
    data_dir: Optional[str] = None
    out_dir: str = DEFAULT_OUT_DIR
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    identity_field: FieldConfig = field(default_factory=FieldConfig)
    deformation: DeformationConfig = field(default_factory=DeformationConfig)
    identity_training: IdentityTrainConfig = field(default_factory=IdentityTrainConfig)
    expression_training: ExpressionTrainConfig = field(default_factory=ExpressionTrainConfig)
    fitting: FitConfig = field(default_factory=FitConfig)
    tracking: TrackConfig = field(default_factory=TrackConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"Unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")

    @property
    def data_path(self) -> Path:
        return Path(self.data_dir or os.environ.get(DATA_DIR_ENV) or DEFAULT_DATA_DIR)

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    def apply_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None, out_dir: Optional[str] = None,
                        data_dir: Optional[str] = None) -> "RunConfig":
        """
        Apply command-line overrides and propagate seed and threads into the
        sections that consume them.
        """
        if seed is not None:
            self.seed = int(seed)
        if threads is not None:
            if threads < 1:
                raise ConfigError(f"threads must be at least 1, got {threads}")
            self.threads = int(threads)
        if out_dir is not None:
            self.out_dir = str(out_dir)
        if data_dir is not None:
            self.data_dir = str(data_dir)
        for section in (self.identity_training, self.expression_training, self.fitting, self.tracking.fit):
            section.seed = self.seed
        for section in (self.identity_training, self.expression_training):
            section.threads = self.threads
        self.metrics.seed = self.seed
        return self

    def to_dict(self) -> Dict[str, Any]:
        return config_to_dict(self)


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Load a run document.

    Args:
        path: JSON document; defaults apply when None
        overrides: Keyword overrides for ``RunConfig.apply_overrides``

    Returns:
        RunConfig

    Raises:
        ConfigError: Unknown keys, bad values or an unsupported schema version
    """
    data = load_config_file(path) if path is not None else {}
    config = config_from_dict(RunConfig, data, section="run")
    if path is not None:
        logger.info("Loaded run config %s", path)
    return config.apply_overrides(**(overrides or {}))
