"""Shared exception types."""


class DataError(ValueError):
    """Input data violates a contract (bad rows, duplicates, empty joins)."""


class SchemaError(DataError):
    """A required column is absent or the header is malformed."""


class ConfigError(ValueError):
    """Run configuration failed validation."""
