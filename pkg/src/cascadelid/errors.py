"""Exception hierarchy shared by all cascadelid modules."""


class CascadeLidError(Exception):
    """Base class for every error raised deliberately by this package."""


class InvalidTokenError(CascadeLidError, ValueError):
    pass


class ConfigError(CascadeLidError, ValueError):
    pass


class DataFormatError(CascadeLidError, ValueError):
    """A corpus file violates the TSV record format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(CascadeLidError):
    pass


class EmptyDocumentError(CascadeLidError, ValueError):
    """A document produced no features and cannot be used as a training step."""


class ModelFormatError(CascadeLidError, ValueError):
    pass


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class NonFiniteWeightError(ModelFormatError):
    pass


class TuningError(CascadeLidError, ValueError):
    pass


class ProtocolError(CascadeLidError):
    """An external stage broke the line protocol."""


class HandshakeTimeout(ProtocolError):
    pass


class StageError(CascadeLidError):
    """Failure inside one cascade stage; ``stage`` names it."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage!r}: {message}")
        self.stage = stage
