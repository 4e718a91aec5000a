class SketchError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(SketchError, ValueError):
    """Invalid sketch or experiment parameters."""


class IncompatibleSketchError(SketchError):
    """Two sketches built with different parameters were compared or merged."""


class EmptySketchError(SketchError):
    """An estimate was requested from a sketch that has seen no items."""


class InsufficientDataError(SketchError):
    """No register pair carries usable information (one-permutation sketches)."""


class DomainError(ValueError):
    """An analytical quantity was requested outside its domain."""


class ParseError(SketchError):
    """Malformed input data; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
