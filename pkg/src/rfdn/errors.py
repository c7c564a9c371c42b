class ConfigError(ValueError):
    """Invalid configuration, flag or layer geometry."""


class ShapeError(ValueError):
    """Tensor shapes that cannot be combined."""


class WeightFormatError(ValueError):
    """A weight file that is not a valid RFDW container."""


class UsageError(RuntimeError):
    """An API called in a state it does not support."""
