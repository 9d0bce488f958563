"""
Neural core: dense networks with analytic derivatives, optimisers and the
checkpoint container.
"""

from .dense import DenseNet, NetGrads, NetTape, net_eval_with_grad, softplus, SOFTPLUS_BETA
from .optim import Adam, LRSchedule, OptimState, adam_step, clip_by_global_norm
from .lbfgs import LBFGSResult, lbfgs_minimize
from .checkpoint import encode_tensors, decode_tensors, save_tensors, load_tensors

__all__ = [
    'DenseNet',
    'NetGrads',
    'NetTape',
    'net_eval_with_grad',
    'softplus',
    'SOFTPLUS_BETA',
    'Adam',
    'LRSchedule',
    'OptimState',
    'adam_step',
    'clip_by_global_norm',
    'LBFGSResult',
    'lbfgs_minimize',
    'encode_tensors',
    'decode_tensors',
    'save_tensors',
    'load_tensors',
]
