"""
Exceptions raised by the VRD library.

Library code raises these; only the command-line front end turns them into
exit codes.
"""


class VrdError(Exception):
    """Base class for all VRD errors."""


class FieldError(VrdError):
    """A field has invalid shape or non-finite values."""


class ShapeMismatchError(FieldError):
    """Two operands (or a field and a parameter set) disagree in shape."""


class FormatError(VrdError):
    """A file on disk does not follow the expected binary or text format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(VrdError):
    """A training config or command-line value could not be parsed."""


class NotPositiveDefiniteError(VrdError):
    """A matrix that must be positive definite is not."""


class ConvergenceError(VrdError):
    """An iterative dense solver failed to converge."""


class SingularMatrixError(VrdError):
    """The dense oracle system is singular."""


class TrainingDivergedError(VrdError):
    """Training produced a non-finite loss."""
