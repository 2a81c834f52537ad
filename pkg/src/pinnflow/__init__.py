"""Physics-informed neural network toolkit for steady 2-D incompressible
flow reconstruction: composite residual/data/boundary losses, gradient-
balanced adaptive weights, and a chained warmup + cosine-restart schedule,
for forward and inverse problems."""

from .errors import (BalancingError, ConfigError, DataError, DivergenceError,
                     EvaluationError, PinnflowError)

__all__ = [
    "BalancingError", "ConfigError", "DataError", "DivergenceError",
    "EvaluationError", "PinnflowError",
]

__version__ = "0.1.0"
