"""Exception types shared across the package."""


class KickdirError(Exception):
    """Base class for all kickdir errors."""


class ConfigError(KickdirError):
    """Invalid configuration file or option value."""


class DataError(KickdirError):
    """Problem with a dataset file or its contents."""


class CorruptHeaderError(DataError):
    """Dataset file header is missing, malformed, or inconsistent."""


class DimensionMismatchError(DataError):
    """A sample's array shapes disagree with the declared manifest."""


class TruncatedPayloadError(DataError):
    """Dataset file ends before the declared records are complete."""


class TrainingDivergedError(KickdirError):
    """Non-finite loss or gradients encountered during optimization."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
