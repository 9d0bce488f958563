"""
Logging setup for the command-line entry point.

Library modules only create loggers; handlers are configured here, once.
"""

import logging
import sys

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def verbosity_to_level(verbosity: int) -> int:
    if verbosity <= 0:
        return logging.WARNING
    if verbosity == 1:
        return logging.INFO
    return logging.DEBUG


def configure_logging(verbosity: int = 0, stream=None) -> logging.Logger:
    """
    Attach a stream handler to the package logger.

    Args:
        verbosity: Count of ``-v`` flags (0 warnings, 1 info, 2+ debug)
        stream: Output stream, stderr by default

    Returns:
        logging.Logger: The configured ``headmodel`` logger
    """
    logger = logging.getLogger("headmodel")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)
    logger.setLevel(verbosity_to_level(verbosity))
    logger.propagate = False
    return logger
