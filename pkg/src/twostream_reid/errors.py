"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes or ranks incompatible with an operation."""


class ParameterError(ValueError):
    """A configuration value or argument outside its documented range."""


class ConsistencyError(ValueError):
    """Cross-referenced records disagree (e.g. a match key missing a track)."""


class ValidationError(ValueError):
    """A manifest or corpus failed its integrity checks."""


class FormatError(ValueError):
    """A serialized artifact is malformed, truncated, or of the wrong kind."""


class StorageError(OSError):
    """Filesystem-level failure carrying the offending path."""


class DivergedError(RuntimeError):
    """Training produced a non-finite loss; carries the last checkpoint path."""

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
