"""Exception types shared across the package."""


class PrefcfError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PrefcfError):
    """A data file could not be parsed; the message includes the line number."""


class ValidationError(PrefcfError):
    """Input violates a documented invariant (range, uniqueness, protocol, ...)."""


class ConfigError(PrefcfError):
    """A configuration key is unknown, ill-typed, or out of range."""


class NumericError(PrefcfError):
    """A numeric failure during estimation (non-finite or all-zero quantities)."""


class FoldInError(PrefcfError):
    """A test user carries no usable observations for fold-in."""
