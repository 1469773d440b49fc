"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes do not match what an operator expects."""


class InvalidParameterError(ValueError):
    """A scalar or structural parameter is outside its valid range."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.history = list(history or [])


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
