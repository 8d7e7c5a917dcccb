"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericsError -> 3.
Everything else is an ordinary crash.
"""


class ShapeError(ValueError):
    """Operands have incompatible or malformed shapes."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class PolicyError(RuntimeError):
    """A cache policy was asked for state it does not have."""


class NumericsError(RuntimeError):
    """A run produced non-finite or diverging values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
