"""Exception types shared across the package."""


class HandTrackError(Exception):
    """Base class for all package-specific errors."""


class FormatError(HandTrackError):
    """A sequence, label, or trajectory file does not conform to its format."""


class ConfigError(HandTrackError):
    """A configuration file or override is invalid."""


class EmptyFrameError(HandTrackError):
    """The depth frame contains no valid (nonzero) measurement."""
