"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class FmdError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FmdError):
    """A parameter or configuration value violates its contract."""


class DataError(FmdError):
    """Input data is malformed, missing, or inconsistent."""


class NumericalError(FmdError):
    """A computation failed numerically (divergence, ill-conditioning)."""
