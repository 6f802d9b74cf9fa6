"""Exception hierarchy shared across the package."""


class LyaplabError(Exception):
    """Base class for all lyaplab errors."""


class InvalidArgument(LyaplabError):
    """A caller-supplied value violates a documented precondition."""


class DegenerateInput(LyaplabError):
    """A matrix is singular, non-finite, or otherwise outside the group model."""


class NumericalFailure(LyaplabError):
    """An estimator produced non-finite values; carries the step index when known."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class NonReturningSet(LyaplabError):
    """An induced trajectory failed to return to the section within the abort threshold."""


class IoError(LyaplabError):
    """A record could not be read or written."""


class SchemaError(LyaplabError):
    """A persisted record does not match the expected schema version or shape."""
