"""Exception hierarchy shared across planweave."""

from __future__ import annotations


class PlanweaveError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(PlanweaveError):
    """A record failed to decode. ``field`` names the first offending field."""

    def __init__(self, field: str, message: str = "") -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class OrderingError(PlanweaveError):
    """Trajectory events are not ordered by step."""


class TransitionError(PlanweaveError):
    """Illegal node status transition."""


class GraphValidationError(PlanweaveError):
    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        super().__init__("; ".join(violations))


class CycleError(PlanweaveError):
    def __init__(self, cycle: list[str]) -> None:
        self.cycle = list(cycle)
        super().__init__("cycle: " + " -> ".join(cycle))


class RevisionRejected(PlanweaveError):
    """A revision batch was refused; the input graph is left untouched."""

    def __init__(self, message: str, cycle: list[str] | None = None) -> None:
        self.cycle = list(cycle) if cycle else []
        super().__init__(message)


class DanglingReferenceError(RevisionRejected):
    """An op referenced a node or edge that does not exist."""


class NotFoundError(PlanweaveError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class MarkupError(PlanweaveError):
    """Planner output could not be parsed."""


class _CostedError(PlanweaveError):
    """Failure that still consumed planner tokens the caller must account for."""

    def __init__(self, message: str, tokens_in: int = 0, tokens_out: int = 0) -> None:
        self.tokens_in = tokens_in
        self.tokens_out = tokens_out
        super().__init__(message)


class InitializationError(_CostedError):
    pass


class AdaptationError(_CostedError):
    pass


class RoleResolutionError(PlanweaveError):
    pass


class TransportError(PlanweaveError):
    """The chat endpoint could not be reached or kept failing."""


class VerdictError(PlanweaveError):
    pass


class DataError(PlanweaveError):
    pass


class StateError(PlanweaveError):
    pass


class ConfigurationError(PlanweaveError):
    pass


class SynthesisError(PlanweaveError):
    pass


class DivergenceError(PlanweaveError):
    """KL divergence is infinite: mass outside the reference support."""
