"""Shared exception types, mapped to CLI exit codes."""


class PsroError(Exception):
    """Base class for library errors."""


class InvalidInputError(PsroError, ValueError):
    """Malformed arguments: bad shapes, unknown names, invalid probabilities."""


class UnsupportedConfigurationError(PsroError):
    """A combination of game / solver / oracle that is not defined."""


class NumericalFailureError(PsroError):
    """An iterative solve failed to converge; carries diagnostics."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class WalkthroughMismatchError(PsroError):
    """A scripted walkthrough diverged from its expected step log."""
