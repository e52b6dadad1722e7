"""Exception types shared across the package."""


class TracklearnError(Exception):
    """Base class for all package-specific errors."""


class ZeroMassError(TracklearnError):
    """An operation needed mass but the grid held (almost) none."""


class DimensionMismatchError(TracklearnError):
    """Two fields that must share a grid have different shapes."""


class EmptyFrameError(TracklearnError):
    """An input frame has zero pixels."""


class SingularSystemError(TracklearnError):
    """A least-squares system stayed singular even after ridge damping."""


class ObjectOutOfFrameError(TracklearnError):
    """A scripted scene object leaves the frame during its lifetime."""


class ZeroGTError(TracklearnError):
    """A detection-accuracy score was requested for a class with no ground truth."""


class ConfigError(TracklearnError):
    """A config or scene file failed to parse or failed validation."""
