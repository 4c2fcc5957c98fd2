class QSGError(Exception):
    """Base class for all package errors."""


class SimplexError(QSGError, ValueError):
    """A vector is not (close enough to) a point of the probability simplex,
    or has an unusable dimension."""


class ParameterError(QSGError, ValueError):
    """A scalar parameter (rate, bandwidth, temperature, ...) is out of range."""


class UnsupportedConfiguration(QSGError, ValueError):
    pass


class ProtocolViolation(QSGError, RuntimeError):
    """An agent policy broke the naming-protocol contract."""


class ConfigError(QSGError, ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = ""
        if field is not None:
            where = f"field '{field}'"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)
