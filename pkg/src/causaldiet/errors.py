"""Exception hierarchy. The CLI maps these onto exit codes."""


class CausalDietError(Exception):
    """Base class for all package errors."""


class UsageError(CausalDietError):
    """Invalid configuration or arguments."""


class DataError(CausalDietError):
    """Input data violates a schema or invariant."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(CausalDietError):
    """Not enough rows or samples to run an operation."""


class EmptyTableError(InsufficientDataError):
    pass


class BaselineUnavailable(InsufficientDataError):
    pass


class IAUCUnavailable(InsufficientDataError):
    pass


class GoalNotFound(CausalDietError):
    def __init__(self, query, targets):
        self.query = query
        self.targets = list(targets)
        super().__init__(
            f"cannot map query {query!r} to a target; available targets: {', '.join(self.targets)}"
        )


class ScoringError(CausalDietError):
    pass


class IntegrityError(CausalDietError):
    """Envelope checksum or schema version mismatch."""


class BackendError(CausalDietError):
    """Text backend failed; carries the prompt so the call can be retried."""

    def __init__(self, message, prompt):
        self.prompt = prompt
        super().__init__(message)


class GenerationError(CausalDietError):
    """Synthetic generator cannot realise the requested excursion."""
