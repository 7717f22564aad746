"""Exception hierarchy shared by every module."""


class CGRNNError(Exception):
    """Base class for all package errors."""


class DimensionError(CGRNNError, ValueError):
    pass


class NumericError(CGRNNError, ArithmeticError):
    pass


class StateError(CGRNNError, RuntimeError):
    pass


class ConfigError(CGRNNError, ValueError):
    pass


class InputTooShortError(CGRNNError, ValueError):
    pass


class FormatError(CGRNNError, ValueError):
    """Malformed binary input (WAV, feature cache, checkpoint)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ParseError(CGRNNError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(CGRNNError, ValueError):
    pass


class LabelError(CGRNNError, ValueError):
    pass


class UndefinedMetricError(CGRNNError, ValueError):
    pass
