"""
Fitting: inverting the deformation, fitting latent codes to observations and
tracking sequences.
"""

from .root_finding import ImplicitGrads, RootFindResult, implicit_backward, root_find_canonical
from .codes import (
    FitConfig,
    FitResult,
    ObservationTerms,
    check_observation,
    fit_expression_codes,
    fit_identity_code,
    fit_joint_single,
    landmark_rows,
    observation_terms,
    reconstruct_mesh,
)
from .tracking import TrackConfig, TrackState, initial_poses, total_variation, track_sequence, tracked_landmarks

__all__ = [
    'ImplicitGrads',
    'RootFindResult',
    'implicit_backward',
    'root_find_canonical',
    'FitConfig',
    'FitResult',
    'ObservationTerms',
    'check_observation',
    'fit_expression_codes',
    'fit_identity_code',
    'fit_joint_single',
    'landmark_rows',
    'observation_terms',
    'reconstruct_mesh',
    'TrackConfig',
    'TrackState',
    'initial_poses',
    'total_variation',
    'track_sequence',
    'tracked_landmarks',
]
