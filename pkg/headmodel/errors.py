"""
Exception hierarchy shared by all sub-packages.

The CLI maps these to process exit codes through their ``exit_code`` attribute.
"""

from typing import Optional


class HeadModelError(Exception):
    """Base class for all errors raised by headmodel."""

    exit_code = 1


class ConfigError(HeadModelError):
    """Unknown key, invalid value or unsupported schema version."""

    exit_code = 1


class DimensionMismatchError(HeadModelError, ValueError):
    """Array widths or shapes disagree with the configured dimensions."""

    exit_code = 1

    def __init__(self, what: str, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class DegenerateInputError(HeadModelError, ValueError):
    """Empty or degenerate geometry that an operation cannot work on."""

    exit_code = 3


class NonFiniteError(HeadModelError, ArithmeticError):
    """A NaN or infinity appeared in an input or a gradient."""

    exit_code = 3


class DivergenceError(HeadModelError):
    """An optimisation produced a non-finite loss."""

    exit_code = 3

    def __init__(self, message: str, iteration: Optional[int] = None, batch: Optional[int] = None):
        self.iteration = iteration
        self.batch = batch
        details = []
        if iteration is not None:
            details.append(f"iteration {iteration}")
        if batch is not None:
            details.append(f"batch {batch}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class StageOrderError(HeadModelError):
    """The expression stage was requested before the identity stage finished."""

    exit_code = 1


class FittingError(HeadModelError):
    """Latent fitting could not proceed, e.g. too many failed root finds."""

    exit_code = 3


class CheckpointError(HeadModelError):
    """A checkpoint file is malformed, truncated or of an unknown version."""

    exit_code = 2


class FileFormatError(HeadModelError):
    """A mesh, point-cloud or data set file cannot be parsed."""

    exit_code = 2


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3
