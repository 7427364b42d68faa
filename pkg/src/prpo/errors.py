"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value."""


class InputError(ValueError):
    """Malformed input data (token ids out of range, bad shapes)."""


class NumericalError(ArithmeticError):
    """Non-finite values encountered during sampling or optimisation."""

    def __init__(self, message, step=None, norm=None):
        super().__init__(message)
        self.step = step
        self.norm = norm
