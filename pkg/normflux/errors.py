"""
Error types.

Every failure the CLI reports maps to one of these classes; the exit code
travels with the exception so commands never hard-code it.
"""


class NormfluxError(Exception):
    """Base class for all normflux failures."""

    exit_code: int = 1

    def __init__(self, message: str, detail: str | None = None):
        super().__init__(message)
        self.message = message
        self.detail = detail

    def __str__(self) -> str:
        if self.detail:
            return f"{self.message} ({self.detail})"
        return self.message


class ConfigError(NormfluxError, ValueError):
    """Invalid or unknown configuration."""

    exit_code = 2


class DataError(NormfluxError, ValueError):
    """Input data is missing, malformed, or inconsistent with the model."""

    exit_code = 3


class NumericError(NormfluxError, ArithmeticError):
    """A numerical routine failed (e.g. Cholesky after ridge)."""

    exit_code = 4
