"""
Shared utilities: configuration loading, seeded generators, the worker pool
and logging setup.
"""

from .config import config_from_dict, config_to_dict, load_config_file
from .rng import make_rng
from .parallel import map_items
from .logs import configure_logging, verbosity_to_level, LOG_FORMAT

__all__ = [
    'config_from_dict',
    'config_to_dict',
    'load_config_file',
    'make_rng',
    'map_items',
    'configure_logging',
    'verbosity_to_level',
    'LOG_FORMAT',
]
