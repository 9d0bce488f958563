"""
Registration: similarity alignment, filtered point-to-plane distances,
morphable template fitting, region subdivision and ARAP fine-tuning.
"""

from .similarity import SimilarityTransform, rotation_right_jacobian, rotvec_backward, skew, umeyama_align
from .distance import P2PResult, ScanTarget, charbonnier, filtered_p2p
from .template import (
    NUM_LANDMARKS,
    FitParams,
    MorphableTemplate,
    RegistrationConfig,
    fit_template,
    hinge_transform,
    rigid_align_to_scan,
)
from .subdivision import subdivide_region, subdivision_rounds
from .arap import ARAPResult, arap_energy, arap_register, fit_rotations, one_ring_edges

__all__ = [
    'SimilarityTransform',
    'rotation_right_jacobian',
    'rotvec_backward',
    'skew',
    'umeyama_align',
    'P2PResult',
    'ScanTarget',
    'charbonnier',
    'filtered_p2p',
    'NUM_LANDMARKS',
    'FitParams',
    'MorphableTemplate',
    'RegistrationConfig',
    'fit_template',
    'hinge_transform',
    'rigid_align_to_scan',
    'subdivide_region',
    'subdivision_rounds',
    'ARAPResult',
    'arap_energy',
    'arap_register',
    'fit_rotations',
    'one_ring_edges',
]
