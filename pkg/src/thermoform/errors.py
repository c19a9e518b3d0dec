"""Exception hierarchy shared by every thermoform module."""


class ThermoformError(Exception):
    """Base class for all errors raised by this package."""


class SpaceError(ThermoformError, ValueError):
    """Malformed shift space, word or potential description."""


class EnumerationCapError(ThermoformError):
    """An enumeration would produce more items than the configured cap."""

    def __init__(self, what: str, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"{what}: {count} items exceeds enumeration cap {cap}")


class NotPrimitiveError(ThermoformError):
    """Raised when an operation needs a unique equilibrium state.

    Primitivity of the transition matrix is the checkable condition under
    which every locally constant potential has exactly one equilibrium state.
    """

    def __init__(self, detail: str = ""):
        msg = ("uniqueness premise fails: transition matrix is not primitive, "
               "so f+g need not have a unique equilibrium state")
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ReducibleChainError(ThermoformError):
    """A stochastic matrix has more than one closed communicating class."""


class ConvergenceError(ThermoformError):
    """A numerical iteration failed to meet its tolerance."""
