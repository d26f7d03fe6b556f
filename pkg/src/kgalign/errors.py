"""Exception hierarchy shared by all stages."""


class KgAlignError(Exception):
    """Base class for every error raised by this package."""


class ParseError(KgAlignError, ValueError):
    """Malformed input record. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ParseError):
    """Structurally invalid file (wrong dimensions, bad section layout)."""


class ConfigError(KgAlignError, ValueError):
    pass


class EmptyGraphError(KgAlignError):
    pass


class SamplingError(KgAlignError, ValueError):
    pass


class TrainingError(KgAlignError, RuntimeError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
