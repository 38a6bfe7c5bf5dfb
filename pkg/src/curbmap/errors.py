"""Exception hierarchy shared across the package."""


class CurbMapError(Exception):
    """Base class for all errors raised by this package."""


class InputValidationError(CurbMapError):
    """Caller passed data violating a documented precondition."""


class FormatError(CurbMapError):
    """A file does not match its documented binary/text layout."""

    def __init__(self, path, message, offset=None):
        self.path = str(path)
        self.offset = offset
        detail = f"{self.path}: {message}"
        if offset is not None:
            detail += f" (byte offset {offset})"
        super().__init__(detail)


class ConsistencyError(CurbMapError):
    """Two inputs that must agree (e.g. cloud and labels) do not."""


class CalibrationError(CurbMapError):
    """Calibration file is missing required entries or is malformed."""
