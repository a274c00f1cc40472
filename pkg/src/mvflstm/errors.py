"""Exception types shared across the package."""


class MvflstmError(Exception):
    pass


class ConfigError(MvflstmError, ValueError):
    """Bad shapes, geometry or topology settings."""


class CacheError(MvflstmError, RuntimeError):
    """A backward pass was handed a cache that does not belong to it."""


class InfeasibleLabelError(MvflstmError, ValueError):
    """The label sequence cannot be aligned to the given number of frames."""


class TrainingDiverged(MvflstmError, FloatingPointError):
    pass


class FormatError(MvflstmError, ValueError):
    """A binary or text file does not follow its documented layout."""
