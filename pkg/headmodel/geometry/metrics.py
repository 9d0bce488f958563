"""
Reconstruction Metrics

Symmetric L1 Chamfer distance, normal consistency and F-score between two
meshes. Seeded samples on each mesh are measured against the other mesh's
surface (exact closest points on nearby triangles). Distances are in canonical
units; ``MM_TO_UNITS`` fixes the millimetre scale of the canonical head.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from ..errors import DegenerateInputError
from ..utils.rng import make_rng
from .mesh import LABEL_FRONT, TriMesh
from .neighbors import NNIndex, SurfaceIndex
from .sampling import sample_surface

logger = logging.getLogger(__name__)

MM_TO_UNITS = 4e-3


def mm_to_canonical(mm: float, mm_to_units: float = MM_TO_UNITS) -> float:
    return float(mm) * mm_to_units


@dataclass
class MetricsConfig:
    """
    Attributes:
        n_samples: Surface samples per mesh
        tau_mm: F-score threshold in millimetres
        mm_to_units: Canonical units per millimetre
        region_margin_mm: Samples farther than this from the labelled front region are dropped
        seed: Sampling seed
    """

    n_samples: int = 100000
    tau_mm: float = 1.5
    mm_to_units: float = MM_TO_UNITS
    region_margin_mm: float = 10.0
    seed: int = 0

    @property
    def tau(self) -> float:
        return mm_to_canonical(self.tau_mm, self.mm_to_units)

    @property
    def region_margin(self) -> float:
        return mm_to_canonical(self.region_margin_mm, self.mm_to_units)


@dataclass
class MetricsReport:
    l1_chamfer: float
    normal_consistency: float
    f_score: float
    tau: float
    precision: float
    recall: float
    accuracy: float
    completeness: float
    n_reconstruction: int
    n_reference: int

    def to_dict(self) -> Dict:
        return asdict(self)


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbour distance between two point sets."""
    _, d_ab = NNIndex(b).query(a)
    _, d_ba = NNIndex(a).query(b)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def evaluate_metrics(
    reconstruction: TriMesh,
    reference: TriMesh,
    config: Optional[MetricsConfig] = None,
    region_mask: bool = True,
) -> MetricsReport:
    """
    Compare a reconstruction against a reference mesh.

    Args:
        reconstruction: Reconstructed mesh
        reference: Ground-truth mesh; its front labels define the evaluation region
        config: Sample count, threshold and seed
        region_mask: Restrict samples to the margin around the reference front region

    Returns:
        MetricsReport: Chamfer, normal consistency and F-score at ``config.tau``

    Raises:
        DegenerateInputError: If a mesh or the masked sample set is empty
    """
    config = config or MetricsConfig()
    reconstruction.require_non_empty("reconstruction mesh")
    reference.require_non_empty("reference mesh")
    rec = sample_surface(reconstruction, config.n_samples, rng=make_rng(config.seed, "metrics"), stratify=False)
    ref = sample_surface(reference, config.n_samples, rng=make_rng(config.seed, "metrics"), stratify=False)

    if region_mask:
        if ref.labels is None or not np.any(ref.labels == LABEL_FRONT):
            logger.warning("Reference has no front labels; evaluating on the whole surface")
        else:
            front = NNIndex(ref.points[ref.labels == LABEL_FRONT])
            _, rec_dist = front.query(rec.points)
            _, ref_dist = front.query(ref.points)
            rec = rec.subset(rec_dist <= config.region_margin)
            ref = ref.subset(ref_dist <= config.region_margin)
    if len(rec) == 0 or len(ref) == 0:
        raise DegenerateInputError(
            f"No samples left after region masking (reconstruction {len(rec)}, reference {len(ref)})"
        )

    dist_a, _, normals_a = SurfaceIndex(reference).query(rec.points)
    dist_b, _, normals_b = SurfaceIndex(reconstruction).query(ref.points)
    accuracy = float(dist_a.mean())
    completeness = float(dist_b.mean())
    cos_a = np.abs(np.sum(rec.normals * normals_a, axis=1))
    cos_b = np.abs(np.sum(ref.normals * normals_b, axis=1))
    precision = float(np.mean(dist_a <= config.tau))
    recall = float(np.mean(dist_b <= config.tau))
    f_score = 0.0 if precision + recall == 0.0 else 2.0 * precision * recall / (precision + recall)
    return MetricsReport(
        l1_chamfer=0.5 * (accuracy + completeness),
        normal_consistency=0.5 * (float(cos_a.mean()) + float(cos_b.mean())),
        f_score=f_score,
        tau=config.tau,
        precision=precision,
        recall=recall,
        accuracy=accuracy,
        completeness=completeness,
        n_reconstruction=len(rec),
        n_reference=len(ref),
    )
