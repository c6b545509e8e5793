"""Exception types shared across the package."""


class SemCSError(Exception):
    """Base class for all semcs errors."""


class InvalidInputError(SemCSError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(SemCSError):
    """Missing or inconsistent configuration, e.g. an absent weight file."""


class NumericError(SemCSError):
    """A numerical failure: non-finite values or a solver that did not converge.

    ``diagnostics`` carries whatever context the raiser had (last good
    parameters, iteration index, offending values).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateMaskError(SemCSError):
    """No usable foreground/background partition exists for this image."""
