"""Exception types shared across the package."""


class LeastResError(Exception):
    """Base class for all package errors."""


class DegenerateInputError(LeastResError):
    """Input has too little geometric content (collinear samples, empty sets)."""


class CoverageError(LeastResError):
    """A query point lies outside the region the data can answer for."""


class ValidityError(LeastResError):
    """A constructed object violates the validity conditions of its family."""


class PreconditionError(LeastResError):
    """A documented precondition failed; `hypothesis` names which one."""

    def __init__(self, hypothesis: str, detail: str = ""):
        self.hypothesis = hypothesis
        msg = hypothesis if not detail else f"{hypothesis}: {detail}"
        super().__init__(msg)


class ResolutionError(LeastResError):
    """The grid is too coarse for the requested construction."""


class NonSmoothModelError(LeastResError):
    """A derivative of the pressure model was requested where it does not exist."""


class FitError(LeastResError):
    """A least-squares fit could not be performed (rank deficiency etc.)."""
