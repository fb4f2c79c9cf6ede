"""Exception types shared across the package.

The CLI maps these onto distinct exit codes: configuration problems exit
with 2, numerical failures with 3, and failed result contracts with 1.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad flags, malformed profile spec, unknown keys."""


class ProfileError(ValueError):
    """A variance profile violates its constraints (e.g. nonpositive entry)."""


class RegimeError(ValueError):
    """An operation was requested outside its supported parameter regime."""


class NumericalError(RuntimeError):
    """A solver or eigensolver failed to reach its accuracy contract."""
