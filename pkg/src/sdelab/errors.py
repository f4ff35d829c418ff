"""Exception types shared across the package."""


class SdeLabError(Exception):
    """Base class for all sdelab errors."""


class ValidationError(SdeLabError):
    """Invalid construction input (ordering, shapes, ranges)."""


class AmbiguousValueError(SdeLabError):
    """Evaluation 'at' a breakpoint whose one-sided limits disagree."""


class DegenerateDiffusionError(SdeLabError):
    """A diffusion one-sided limit is zero where it must not be."""


class ConstructionError(SdeLabError):
    """A certified construction (e.g. monotonicity of a transform) failed."""


class RangeError(SdeLabError):
    """Requested value outside the numerically reachable range."""


class DivergenceError(SdeLabError):
    """A scheme produced a non-finite state."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class NonTerminationError(SdeLabError):
    """An adaptive method exceeded its hard query cap."""


class InsufficientDataError(SdeLabError):
    """Too few samples or points for the requested statistic."""
