"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent shapes, settings or solver parameters."""


class ValidationError(ValueError):
    """Input data violates a documented precondition."""


class ParseError(ValidationError):
    """Malformed row in a CSV input file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedMetricError(ValueError):
    """A metric has no admissible samples to average over."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, epoch=None, task=None):
        self.epoch = epoch
        self.task = task
        ctx = []
        if task is not None:
            ctx.append(f"task={task}")
        if epoch is not None:
            ctx.append(f"epoch={epoch}")
        if ctx:
            message = f"{message} ({', '.join(ctx)})"
        super().__init__(message)
