class StratDetectError(Exception):
    """Base class for data and configuration errors raised by this package."""


class SchemaError(StratDetectError):
    """A record violates the match/row schema."""


class OrderingError(StratDetectError):
    """Rows were visited out of chronological order."""


class ConfigError(StratDetectError):
    """Invalid or inconsistent configuration."""


class AggregationError(StratDetectError):
    """Not enough results to aggregate."""
