"""
Neural fields: anchor layouts, the locally decomposed identity field and the
forward expression deformation field.
"""

from .layout import (
    AnchorLayout,
    BUILTIN_LAYOUTS,
    SYMMETRY_AXIS,
    TRACKING_LANDMARKS,
    flip,
    scaled_local_dim,
    site_direction,
)
from .identity import (
    CodeGrads,
    EnsembleField,
    FieldConfig,
    FieldEval,
    IdentityCode,
    blend_weights,
    identity_sdf_eval,
    identity_sdf_gradient,
    local_sdf_eval,
    mirror_code,
    predict_anchors,
    symmetry_penalty,
)
from .expression import (
    DeformationConfig,
    DeformationField,
    DeformEval,
    ExpressionCode,
    deform_jacobian,
    deform_point,
    project_identity,
)

__all__ = [
    'AnchorLayout',
    'BUILTIN_LAYOUTS',
    'SYMMETRY_AXIS',
    'TRACKING_LANDMARKS',
    'flip',
    'scaled_local_dim',
    'site_direction',
    'CodeGrads',
    'EnsembleField',
    'FieldConfig',
    'FieldEval',
    'IdentityCode',
    'blend_weights',
    'identity_sdf_eval',
    'identity_sdf_gradient',
    'local_sdf_eval',
    'mirror_code',
    'predict_anchors',
    'symmetry_penalty',
    'DeformationConfig',
    'DeformationField',
    'DeformEval',
    'ExpressionCode',
    'deform_jacobian',
    'deform_point',
    'project_identity',
]
