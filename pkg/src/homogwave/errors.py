"""Exception hierarchy shared by all modules."""


class HomogError(Exception):
    """Base class for every error raised by the package."""


class InputError(HomogError, ValueError):
    """Invalid arguments or data violating a structural assumption."""


class EvaluationError(HomogError):
    """A field produced a non-finite value."""


class SolverError(HomogError):
    """An iterative or direct linear solve failed."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BlowUpError(HomogError):
    """The time stepper produced non-finite values."""


class PreconditionError(HomogError):
    """A request that cannot be honoured as posed (e.g. an unresolved scale)."""


class ConfigError(HomogError):
    """Malformed scenario configuration."""
