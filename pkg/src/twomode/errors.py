"""Exception types raised by the numerical routines."""


class QuadratureError(RuntimeError):
    """An adaptive integral did not reach its requested tolerance."""


class BracketError(RuntimeError):
    """A root could not be bracketed inside the allowed search interval."""


class StepSizeError(ValueError):
    """The time step is too coarse to resolve the memory kernel."""


class SingularPropagatorError(RuntimeError):
    """U(t, t0) is numerically singular where its inverse is required."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class DimensionError(ValueError):
    """A dense reference calculation would exceed its size limit."""
