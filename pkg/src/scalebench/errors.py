"""Exception types shared across the package."""

from __future__ import annotations


class ScaleBenchError(Exception):
    """Base class for every error raised by scalebench."""


class ValidationError(ScaleBenchError, ValueError):
    """A domain object violates one of its invariants.

    ``field`` names the first offending field so callers (the service in
    particular) can report per-record reasons.
    """

    def __init__(self, field: str, message: str | None = None) -> None:
        self.field = field
        super().__init__(field if message is None else f"{field}: {message}")


class SingularMatrix(ScaleBenchError, ArithmeticError):
    pass


class ParseError(ScaleBenchError, ValueError):
    pass


class MissingVariable(ScaleBenchError, KeyError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(name)

    def __str__(self) -> str:
        return f"missing template variable: {self.name}"


class InvalidGrid(ScaleBenchError, ValueError):
    pass


class InvalidPlan(ScaleBenchError, ValueError):
    pass


class RunFailed(ScaleBenchError):
    """A single configuration of a plan could not produce a record."""

    def __init__(self, config, cause: BaseException | str) -> None:
        self.config = config
        self.cause = cause
        super().__init__(f"{config}: {cause}")


class RunPending(RunFailed):
    """Batch script emitted but the job output is not available yet."""


class MissingBaseline(ScaleBenchError, ValueError):
    pass


class NonPositiveRuntime(ScaleBenchError, ValueError):
    pass


class AuthError(ScaleBenchError):
    pass


class RemoteError(ScaleBenchError):
    """Push gave up on a batch; ``accepted``/``duplicates`` hold progress so far."""

    def __init__(self, message: str, accepted: int = 0, duplicates: int = 0) -> None:
        self.accepted = accepted
        self.duplicates = duplicates
        super().__init__(message)


class MixedMetrics(ScaleBenchError, ValueError):
    pass


class EmptyChart(ScaleBenchError, ValueError):
    pass


class ConfigError(ScaleBenchError):
    pass
