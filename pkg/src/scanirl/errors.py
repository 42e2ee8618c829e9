"""Exception hierarchy shared by every module."""


class ScanIRLError(Exception):
    """Base class for all package errors."""


class ConfigError(ScanIRLError, ValueError):
    pass


class ShapeError(ScanIRLError, ValueError):
    pass


class UsageError(ScanIRLError, RuntimeError):
    pass


class UnsupportedError(ScanIRLError, NotImplementedError):
    pass


class DataError(ScanIRLError, ValueError):
    pass


class TrainingError(ScanIRLError, FloatingPointError):
    pass


class FormatError(ScanIRLError, IOError):
    pass


class CorruptionError(FormatError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConvergenceError(ScanIRLError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
