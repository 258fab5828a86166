"""Exception types shared across the package."""


class TvparxError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteParameter(TvparxError):
    """A parameter vector contains NaN or infinity."""


class DimensionMismatch(TvparxError):
    """Array shapes disagree with the declared model dimensions."""


class DomainError(TvparxError):
    """Inputs lie outside the mathematical domain of an operation."""


class OverflowGuard(TvparxError):
    """The simulated intensity hit its upper clamp too often.

    Signals an explosive parameterization rather than a numerical bug; the
    offending clamp fraction is reported in the message.
    """


class DataError(TvparxError):
    """Base class for problems in user-supplied data files (CLI exit 4)."""


class ParseError(DataError):
    """Malformed CSV content; the message carries row/column location."""


class NegativeCount(DataError):
    """The y column contains a negative value."""


class NonFiniteCovariate(DataError):
    """A covariate or deterministic column contains NaN or infinity."""
