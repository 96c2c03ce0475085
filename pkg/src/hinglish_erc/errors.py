"""Exception hierarchy shared by the package and mapped to CLI exit codes."""


class ERCError(Exception):
    """Base class for all package errors."""


class DataError(ERCError):
    """Malformed or inconsistent input data (exit code 2)."""


class CorpusError(DataError):
    pass


class PipelineError(ERCError):
    """A preprocessing provider failed; ``stage`` names the failing step."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class NumericalError(ERCError):
    """Non-finite values or divergence (exit code 3)."""
