"""Exception types raised across the package."""


class TwinAlignError(Exception):
    """Base class for package errors."""


class DataError(TwinAlignError, ValueError):
    """Input data is unreadable, malformed or inconsistent."""


class ConvergenceError(TwinAlignError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    The achieved error is kept on ``residual`` so callers can report it.
    """

    def __init__(self, message, residual=None, n_iter=None):
        super().__init__(message)
        self.residual = residual
        self.n_iter = n_iter


class DegenerateBandwidthError(TwinAlignError, ValueError):
    """A kNN bandwidth collapsed to zero (duplicate-saturated neighborhood)."""


class AlignmentError(TwinAlignError, RuntimeError):
    """An aligner could not produce an embedding."""


class DivergenceError(TwinAlignError, FloatingPointError):
    """Training produced a non-finite loss.

    ``model`` and ``history`` hold the last finite state.
    """

    def __init__(self, message, model=None, history=None, term=None):
        super().__init__(message)
        self.model = model
        self.history = history
        self.term = term


class ProvenanceError(TwinAlignError, ValueError):
    """An artifact was produced from different inputs than expected."""
