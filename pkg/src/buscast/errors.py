"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI: ConfigError -> 2, DataError -> 3,
any other failure inside a stage -> 4.
"""


class BuscastError(Exception):
    """Base class for all package errors."""


class ConfigError(BuscastError):
    """Invalid or inconsistent run configuration."""


class DataError(BuscastError):
    """Missing files, schema violations, malformed rows, duplicate keys."""


class ContractError(BuscastError):
    """API misuse: registry mismatch, precondition violation, undefined index."""
