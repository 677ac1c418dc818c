"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A solver or linear-algebra step failed numerically (ill conditioning, overflow)."""
