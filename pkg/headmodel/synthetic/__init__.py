"""
Procedural ground truth: synthetic heads, expressions, depth observations,
a morphable template and the on-disk data set tree.
"""

from .shapes import (
    FRONT_THRESHOLD,
    LANDMARK_DIRECTIONS,
    SyntheticConfig,
    SyntheticSubject,
    front_labels,
    generate_subject,
    registered_topology,
)
from .expressions import (
    EXPRESSION_SITES,
    SyntheticExpression,
    apply_expression,
    interpolate_sequence,
    jaw_pivot,
    jaw_weights,
    make_expression,
    wendland,
)
from .render import depth_hits, render_depth_cloud, view_rotation
from .template import build_morphable_template, sample_template
from .dataset import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    SubjectRecord,
    SyntheticDataset,
    load_dataset,
    plan_subjects,
    write_dataset,
)

__all__ = [
    'FRONT_THRESHOLD',
    'LANDMARK_DIRECTIONS',
    'SyntheticConfig',
    'SyntheticSubject',
    'front_labels',
    'generate_subject',
    'registered_topology',
    'EXPRESSION_SITES',
    'SyntheticExpression',
    'apply_expression',
    'interpolate_sequence',
    'jaw_pivot',
    'jaw_weights',
    'make_expression',
    'wendland',
    'depth_hits',
    'render_depth_cloud',
    'view_rotation',
    'build_morphable_template',
    'sample_template',
    'SPLIT_TEST',
    'SPLIT_TRAIN',
    'SubjectRecord',
    'SyntheticDataset',
    'load_dataset',
    'plan_subjects',
    'write_dataset',
]
