"""Shared exception types and their CLI exit codes."""


class GenAugError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(GenAugError):
    """Bad configuration or input files (exit code 2)."""

    exit_code = 2


class BackendError(GenAugError):
    """Backend/transport failure (exit code 3). Usually retryable."""

    exit_code = 3


class PartialFailure(GenAugError):
    """An operation failed partway; carries a report of completed work (exit code 4)."""

    exit_code = 4

    def __init__(self, message, completed=None, failed_index=None):
        super().__init__(message)
        self.completed = list(completed or [])
        self.failed_index = failed_index
