"""Exception types."""


class NumericalError(ValueError):
    """A computation hit a singularity or rank deficiency.

    Subclasses :class:`ValueError` so callers that only care about bad input
    can catch both at once.
    """
