"""
Synthetic data set tree.

Layout under the data set root::

    manifest.json
    template.nphm
    subjects/<id>/neutral.ply
    subjects/<id>/registered.ply
    subjects/<id>/expressions/<k>.ply
    subjects/<id>/anchors.json
    subjects/<id>/landmarks.json

Every subject and expression is a pure function of the run seed and its
index, so the tree is identical for any worker count.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from ..errors import FileFormatError
from ..fields.layout import TRACKING_LANDMARKS
from ..geometry.io import load_json, load_mesh, save_json, save_mesh
from ..geometry.mesh import TriMesh
from ..registration.template import MorphableTemplate
from ..utils.config import config_from_dict, config_to_dict
from ..utils.parallel import map_items
from ..utils.rng import make_rng
from .expressions import SyntheticExpression, apply_expression, make_expression
from .shapes import SyntheticConfig, SyntheticSubject, front_labels, generate_subject
from .template import build_morphable_template

logger = logging.getLogger(__name__)

DATASET_VERSION = 1
MANIFEST_NAME = "manifest.json"
TEMPLATE_NAME = "template.nphm"
SPLIT_TRAIN = "train"
SPLIT_TEST = "test"


@dataclass
class SubjectRecord:
    """
    One subject of a data set.

    Attributes:
        subject_id: Directory name
        seed: Identity seed
        split: ``train`` or ``test``
        asymmetry: Asymmetry level
        expression_seeds: Seed per expression
        neutral: Neutral mesh (loaded on demand)
        registered: Registered mesh
        expressions: Posed neutral meshes, one per expression seed
        anchors: Ground-truth anchors per built-in layout size
        landmarks: 68 landmarks (68, 3)
        tracking_landmarks: Named tracking landmarks
    """

    subject_id: str
    seed: int
    split: str
    asymmetry: float
    expression_seeds: List[int]
    neutral: Optional[TriMesh] = None
    registered: Optional[TriMesh] = None
    expressions: List[TriMesh] = field(default_factory=list)
    anchors: Dict[int, np.ndarray] = field(default_factory=dict)
    landmarks: Optional[np.ndarray] = None
    tracking_landmarks: Dict[str, np.ndarray] = field(default_factory=dict)

    def manifest_entry(self) -> Dict:
        return {
            "id": self.subject_id,
            "seed": self.seed,
            "split": self.split,
            "asymmetry": self.asymmetry,
            "expression_seeds": list(self.expression_seeds),
        }

    def subject(self, config: Optional[SyntheticConfig] = None, with_meshes: bool = False) -> SyntheticSubject:
        """Regenerate the analytic subject from its seed."""
        return generate_subject(self.seed, self.asymmetry, config, with_meshes=with_meshes)

    def expression(self, index: int, config: Optional[SyntheticConfig] = None) -> SyntheticExpression:
        return make_expression(self.expression_seeds[index], config)


@dataclass
class SyntheticDataset:
    root: Path
    config: SyntheticConfig
    seed: int
    subjects: List[SubjectRecord]
    template: Optional[MorphableTemplate] = None

    def split(self, name: str) -> List[SubjectRecord]:
        return [s for s in self.subjects if s.split == name]

    @property
    def train(self) -> List[SubjectRecord]:
        return self.split(SPLIT_TRAIN)

    @property
    def test(self) -> List[SubjectRecord]:
        return self.split(SPLIT_TEST)


def plan_subjects(seed: int, config: SyntheticConfig) -> List[SubjectRecord]:
    """Seeds, splits and expression seeds of every subject, without geometry."""
    records = []
    total = config.num_subjects + config.num_test_subjects
    for index in range(total):
        subject_seed = int(make_rng(seed, "subject", index, algorithm=config.rng).integers(2 ** 31))
        expression_seeds = make_rng(seed, "expression", index, algorithm=config.rng).integers(2 ** 31, size=config.num_expressions)
        records.append(SubjectRecord(
            subject_id=f"s{index:03d}",
            seed=subject_seed,
            split=SPLIT_TRAIN if index < config.num_subjects else SPLIT_TEST,
            asymmetry=config.asymmetry,
            expression_seeds=[int(s) for s in expression_seeds],
        ))
    return records


def _write_subject(root: Path, record: SubjectRecord, config: SyntheticConfig) -> SyntheticSubject:
    subject = generate_subject(record.seed, record.asymmetry, config)
    directory = root / "subjects" / record.subject_id
    save_mesh(directory / "neutral.ply", subject.neutral)
    save_mesh(directory / "registered.ply", subject.registered)
    for k, expression_seed in enumerate(record.expression_seeds):
        posed, _ = apply_expression(subject, make_expression(expression_seed, config))
        save_mesh(directory / "expressions" / f"{k}.ply", posed)
    save_json(directory / "anchors.json", subject.all_anchors())
    tracking = subject.tracking_landmarks()
    save_json(directory / "landmarks.json", {
        "landmarks": subject.landmarks().tolist(),
        "tracking": {name: tracking[i].tolist() for i, name in enumerate(TRACKING_LANDMARKS)},
    })
    return subject


def write_dataset(
    root: Union[str, Path],
    seed: int,
    config: Optional[SyntheticConfig] = None,
    threads: int = 1,
    progress: bool = False,
    n_id: int = 20,
    n_ex: int = 10,
) -> Dict:
    """
    Generate and write a synthetic data set.

    Args:
        root: Output directory (created if missing)
        seed: Run seed
        config: Generator settings
        threads: Worker threads for per-subject generation
        progress: Show a progress bar
        n_id: Identity modes of the morphable template
        n_ex: Expression modes of the morphable template

    Returns:
        Dict: The manifest document
    """
    config = config or SyntheticConfig()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    records = plan_subjects(seed, config)
    subjects = map_items(lambda r: _write_subject(root, r, config), records, threads, progress, desc="subjects")

    train = [s for s, r in zip(subjects, records) if r.split == SPLIT_TRAIN]
    if train:
        build_morphable_template(train, n_id=n_id, n_ex=n_ex, config=config).save(root / TEMPLATE_NAME)

    manifest = {
        "version": DATASET_VERSION,
        "seed": seed,
        "rng": config.rng,
        "config": config_to_dict(config),
        "subjects": [r.manifest_entry() for r in records],
    }
    save_json(root / MANIFEST_NAME, manifest)
    logger.info("Wrote %d subjects (%d train) to %s", len(records), len(train), root)
    return manifest


def _load_record(root: Path, entry: Dict, with_meshes: bool) -> SubjectRecord:
    record = SubjectRecord(
        subject_id=str(entry["id"]),
        seed=int(entry["seed"]),
        split=str(entry["split"]),
        asymmetry=float(entry["asymmetry"]),
        expression_seeds=[int(s) for s in entry["expression_seeds"]],
    )
    directory = root / "subjects" / record.subject_id
    anchors = load_json(directory / "anchors.json")
    record.anchors = {int(k): np.asarray(v, dtype=np.float64).reshape(-1, 3) for k, v in anchors.items()}
    landmarks = load_json(directory / "landmarks.json")
    record.landmarks = np.asarray(landmarks["landmarks"], dtype=np.float64)
    record.tracking_landmarks = {k: np.asarray(v, dtype=np.float64) for k, v in landmarks["tracking"].items()}
    if with_meshes:
        record.neutral = _labelled(load_mesh(directory / "neutral.ply"))
        record.registered = _labelled(load_mesh(directory / "registered.ply"))
        record.expressions = [
            _labelled(load_mesh(directory / "expressions" / f"{k}.ply")) for k in range(len(record.expression_seeds))
        ]
    return record


def _labelled(mesh: TriMesh) -> TriMesh:
    return TriMesh(mesh.vertices, mesh.faces, front_labels(mesh.vertices))


def load_dataset(root: Union[str, Path], with_meshes: bool = True, split: Optional[str] = None) -> SyntheticDataset:
    """
    Read a data set written by ``write_dataset``.

    Vertex labels are not stored in the PLY files; they are recomputed from
    the vertex directions.

    Raises:
        FileNotFoundError: Missing manifest or subject files
        FileFormatError: Unknown manifest version
    """
    root = Path(root)
    manifest = load_json(root / MANIFEST_NAME)
    if manifest.get("version") != DATASET_VERSION:
        raise FileFormatError(f"{root / MANIFEST_NAME}: unsupported data set version {manifest.get('version')!r}")
    config = config_from_dict(SyntheticConfig, manifest["config"], section="synthetic")
    entries = [e for e in manifest["subjects"] if split is None or e["split"] == split]
    subjects = [_load_record(root, e, with_meshes) for e in entries]
    template_path = root / TEMPLATE_NAME
    template = MorphableTemplate.load(template_path) if template_path.is_file() else None
    return SyntheticDataset(root, config, int(manifest["seed"]), subjects, template)
