"""Exception types shared across modules."""


class ConfigError(ValueError):
    """A configuration file or option set violates its schema."""


class DivergenceError(RuntimeError):
    """Optimization produced non-finite or runaway loss values."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration
