"""Exception types shared across the package."""


class CotrainError(Exception):
    """Base class for every error raised by cotrain."""


class ConfigError(CotrainError, ValueError):
    """Invalid configuration or argument value."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ShapeError(CotrainError, ValueError):
    """Tensor or batch shapes do not line up."""


class GraphStateError(CotrainError, RuntimeError):
    """Backward/optimizer called in an invalid graph state."""


class ParseError(CotrainError, ValueError):
    """Malformed file contents."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class DivergenceError(CotrainError, ArithmeticError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, iteration, value):
        self.epoch = epoch
        self.iteration = iteration
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, iteration {iteration}")
