class SurgSceneError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SurgSceneError, ValueError):
    pass


class PointBehindCamera(SurgSceneError, ValueError):
    pass


class DimensionMismatch(SurgSceneError, ValueError):
    pass


class LoadError(SurgSceneError):
    """Raised when an input file is missing or malformed; the message names the file."""
