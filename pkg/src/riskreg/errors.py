"""Exception types shared across the package."""


class ConvergenceError(RuntimeError):
    """An iterative method ran out of iterations before reaching its tolerance.

    Carries whatever partial result was available so callers can inspect it or
    recover.
    """

    def __init__(self, message, last_iterate=None, iterations=None, trail=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
        self.trail = trail


class DegenerateDataError(ValueError):
    """The data cannot support the requested estimate (e.g. it looks like pure noise)."""
