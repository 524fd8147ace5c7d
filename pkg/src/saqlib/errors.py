"""Shared exception types."""


class ConfigError(Exception):
    """Bad or unknown configuration key/value. CLI maps this to exit code 2."""


class DataFormatError(Exception):
    """Malformed or inconsistent data file. CLI maps this to exit code 3."""


class InsufficientDataError(ValueError):
    """Too few rows for the requested fit (PCA, k-means, ...)."""
