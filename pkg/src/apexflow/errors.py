"""Exception types shared across the package."""


class SingularTimeError(ValueError):
    """A time-dependent formula was evaluated where it divides by zero."""


class NumericFailure(RuntimeError):
    """A loss, gradient or state became non-finite."""


class CheckpointError(ValueError):
    """A checkpoint file could not be decoded."""


class ConfigError(ValueError):
    """A run config is malformed. ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
