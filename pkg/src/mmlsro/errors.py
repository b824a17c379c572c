"""Exception hierarchy.

Everything the projection pipeline can raise derives from :class:`MMLSError`
so the optimizers can treat any of them as "projection failed here".
"""


class MMLSError(RuntimeError):
    """MMLS projection or local fit failed."""


class EmptySupport(MMLSError):
    """Too few samples inside the weight support of the frame origin."""


class RankDeficient(MMLSError):
    """Weighted second-moment matrix has fewer than d significant directions."""


class NoConvergence(MMLSError):
    """Frame iteration did not reach its step tolerance or left the ROI ball."""


class InsufficientSupport(MMLSError):
    """Fewer supported samples than polynomial coefficients."""


class IllConditioned(MMLSError):
    """Weighted least-squares system could not be solved even with a ridge."""


class MissingValues(ValueError):
    """A cost fit was requested on a cloud without cost samples."""


class StepTooSmall(RuntimeError):
    """Line search shrank the step below the configured tolerance."""


class NonDescentDirection(ValueError):
    """Search direction has nonnegative slope along the gradient."""


class InitialProjectionFailure(RuntimeError):
    """The starting point could not be projected onto the approximate manifold."""
