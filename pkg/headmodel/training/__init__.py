"""
Training: sample sets, losses, the identity and expression stages and the
persisted models they produce.
"""

from .samples import (
    DeformationSampleSet,
    IdentitySampleSet,
    build_deformation_samples,
    build_identity_samples,
)
from .losses import IGRLoss, IGRTerms, IGRWeights, deformation_loss, igr_terms, loss_igr
from .model import STAGE_EXPRESSION, STAGE_IDENTITY, ExpressionModel, IdentityModel, check_compatible, sidecar_path
from .identity import IdentityTrainConfig, TrainResult, anchor_loss, code_statistics, symmetry_gap, train_identity
from .expression import ExpressionTrainConfig, train_expression

__all__ = [
    'DeformationSampleSet',
    'IdentitySampleSet',
    'build_deformation_samples',
    'build_identity_samples',
    'IGRLoss',
    'IGRTerms',
    'IGRWeights',
    'deformation_loss',
    'igr_terms',
    'loss_igr',
    'STAGE_EXPRESSION',
    'STAGE_IDENTITY',
    'ExpressionModel',
    'IdentityModel',
    'check_compatible',
    'sidecar_path',
    'IdentityTrainConfig',
    'TrainResult',
    'anchor_loss',
    'code_statistics',
    'symmetry_gap',
    'train_identity',
    'ExpressionTrainConfig',
    'train_expression',
]
