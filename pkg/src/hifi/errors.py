class HifiError(Exception):
    """Base class for all errors raised by this package."""

    kind = "error"


class DimensionError(HifiError, ValueError):
    kind = "dimension"


class ArgumentError(HifiError, ValueError):
    kind = "argument"


class GraphError(HifiError):
    kind = "graph"


class FormatError(HifiError):
    """Malformed file. ``offset`` is the byte position where parsing failed."""

    kind = "format"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(HifiError, ValueError):
    kind = "config"
