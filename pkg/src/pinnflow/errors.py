"""Exception hierarchy shared across the toolkit."""


class PinnflowError(Exception):
    """Base class for all toolkit errors."""


class EvaluationError(PinnflowError):
    """Raised when an expression graph cannot be evaluated (e.g. division by zero)."""


class ConfigError(PinnflowError):
    """Invalid configuration: bad layer sizes, negative weights, missing boundary sets."""


class DataError(PinnflowError):
    """Malformed or inconsistent input data."""


class BalancingError(PinnflowError):
    """Adaptive weight update impossible (a gradient term is identically zero)."""


class DivergenceError(PinnflowError):
    """Training produced a non-finite loss.  Carries the epoch and term name."""

    def __init__(self, epoch, term, message=None):
        self.epoch = epoch
        self.term = term
        super().__init__(message or f"non-finite loss in term '{term}' at epoch {epoch}")
