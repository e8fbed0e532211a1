"""Exception types shared across the package.

Each error class marks one failure surface so callers can catch precisely
what they can handle. All inherit from EmgVitError.
"""


class EmgVitError(Exception):
    """Base class for all package errors."""


class ShapeError(EmgVitError, ValueError):
    """Array geometry does not match the declared contract."""


class ParameterError(EmgVitError, ValueError):
    """A scalar parameter is outside its valid range."""


class DomainError(EmgVitError, ValueError):
    """An input value lies outside the mathematical domain of an operation."""


class DegenerateInputError(EmgVitError, ValueError):
    """Input is technically well-formed but carries no usable signal."""


class EmptyResultError(EmgVitError, ValueError):
    """The operation would produce no output (e.g. recording shorter than one window)."""


class FilterError(EmgVitError, ValueError):
    """Digital filter specification invalid for the given sample rate."""


class ContractError(EmgVitError, ValueError):
    """An internal API contract was violated (wrong rank, non-scalar loss, ...)."""


class ProtocolError(EmgVitError, ValueError):
    """The cross-validation protocol cannot be applied to this dataset."""


class IllConditionedError(EmgVitError, ValueError):
    """A matrix required to be invertible is singular or near-singular."""


class FormatError(EmgVitError, ValueError):
    """A file does not conform to the expected container format."""


class CorruptionError(EmgVitError, ValueError):
    """A container file is structurally valid but its payload is damaged."""


class ParseError(EmgVitError, ValueError):
    """Text input (CSV, config) could not be parsed."""


class UsageError(EmgVitError, ValueError):
    """Invalid command-line usage or configuration; maps to exit code 2."""
