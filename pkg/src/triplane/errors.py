"""Failure categories shared across the library and the CLI.

The CLI maps these onto its exit-code contract: configuration problems
exit 1, input/output problems exit 2, numeric failures (NaN/Inf) exit 3.
"""

from .engine import NumericError

__all__ = ["ConfigError", "DataError", "NumericError"]


class ConfigError(Exception):
    """Invalid or inconsistent configuration."""


class DataError(Exception):
    """Missing, malformed, or unwritable data files."""
