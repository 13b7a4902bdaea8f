"""Detect strategic behaviour in a player population from match logs alone.

Per-player game-mode classifiers are trained with and without historical
co-play features; a significant accuracy gain from the co-play inputs is
taken as evidence that mode choices depend on other players.
"""

__version__ = "0.1.0"

from .errors import (
    AggregationError,
    ConfigError,
    OrderingError,
    SchemaError,
    StratDetectError,
)

__all__ = [
    "__version__",
    "AggregationError",
    "ConfigError",
    "OrderingError",
    "SchemaError",
    "StratDetectError",
]
