"""Exception types raised across the package."""


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class NumericError(ArithmeticError):
    pass


class CheckpointError(RuntimeError):
    pass
