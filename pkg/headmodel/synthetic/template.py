"""
Morphable template from the synthetic family.

The mean and identity modes come from a PCA of the registered neutral
meshes (shared icosphere topology). Expression modes are the leading right
singular vectors of the bump displacements of sampled expressions; the
jaw is modelled by the template's own hinge instead of linear modes.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from ..errors import DegenerateInputError
from ..geometry.mesh import TriMesh
from ..registration.template import MorphableTemplate
from ..utils.rng import make_rng
from .expressions import JAW_AXIS, jaw_pivot, jaw_weights, make_expression, mouth_height
from .shapes import SyntheticConfig, SyntheticSubject, front_labels

logger = logging.getLogger(__name__)


def build_morphable_template(
    subjects: Sequence[SyntheticSubject],
    n_id: int = 20,
    n_ex: int = 10,
    expressions_per_subject: int = 4,
    config: Optional[SyntheticConfig] = None,
) -> MorphableTemplate:
    """
    Linear template over the registered meshes of ``subjects``.

    Args:
        subjects: Subjects generated with meshes
        n_id: Identity modes; capped at ``len(subjects) - 1``
        n_ex: Expression modes
        expressions_per_subject: Expressions sampled per subject for the expression modes
        config: Generator settings used for the expressions

    Returns:
        MorphableTemplate: Mean mesh, modes scaled by their standard deviation, jaw hinge and landmarks

    Raises:
        DegenerateInputError: No subject carries a registered mesh
    """
    config = config or SyntheticConfig()
    registered = [s for s in subjects if s.registered is not None]
    if not registered:
        raise DegenerateInputError("Template construction needs subjects with registered meshes")
    stack = np.stack([s.registered.vertices for s in registered])
    num_subjects, num_vertices = stack.shape[:2]
    mean_vertices = stack.mean(axis=0)
    faces = registered[0].registered.faces

    n_id = max(0, min(n_id, num_subjects - 1))
    centred = (stack - mean_vertices).reshape(num_subjects, -1)
    if n_id:
        _, singular, vt = np.linalg.svd(centred, full_matrices=False)
        scale = singular[:n_id] / np.sqrt(num_subjects - 1)
        id_basis = (vt[:n_id].T * scale).reshape(num_vertices, 3, n_id)
    else:
        id_basis = np.zeros((num_vertices, 3, 0))

    offsets = []
    for subject in registered:
        seeds = make_rng(subject.seed, "template", algorithm=config.rng).integers(2 ** 31, size=expressions_per_subject)
        for expression_seed in seeds:
            expression = make_expression(int(expression_seed), config)
            offsets.append(expression.displacement(subject.registered.vertices, subject, hinge=False).ravel())
    n_ex = max(0, min(n_ex, len(offsets)))
    if n_ex:
        _, singular, vt = np.linalg.svd(np.stack(offsets), full_matrices=False)
        scale = singular[:n_ex] / np.sqrt(len(offsets))
        ex_basis = (vt[:n_ex].T * scale).reshape(num_vertices, 3, n_ex)
    else:
        ex_basis = np.zeros((num_vertices, 3, 0))

    pivots = []
    heights = []
    for subject in registered:
        pivots.append(jaw_pivot(subject))
        heights.append(mouth_height(subject))
    weights = jaw_weights(mean_vertices, float(np.mean(heights)))
    mean = TriMesh(mean_vertices, faces, front_labels(mean_vertices))
    logger.info("Built template from %d subjects: %d identity and %d expression modes", num_subjects, n_id, n_ex)
    return MorphableTemplate(
        mean,
        id_basis,
        ex_basis,
        np.mean(pivots, axis=0),
        JAW_AXIS,
        weights,
        registered[0].landmark_indices,
    )


def sample_template(
    template: MorphableTemplate,
    rng: np.random.Generator,
    id_scale: float = 1.0,
    ex_scale: float = 1.0,
    max_angle: float = 0.0,
):
    """
    Random template instance with coefficients drawn from N(0, scale^2).

    Returns:
        Tuple of the mesh, identity coefficients, expression coefficients and jaw angle
    """
    alpha = id_scale * rng.standard_normal(template.d_id)
    beta = ex_scale * rng.standard_normal(template.d_ex)
    angle = float(rng.uniform(0.0, max_angle)) if max_angle > 0.0 else 0.0
    return template.instance(alpha, beta, angle), alpha, beta, angle
