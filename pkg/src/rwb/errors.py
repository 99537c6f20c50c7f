"""Exception hierarchy shared by all solvers."""


class RWBError(Exception):
    """Base class for every error raised by this package."""


class InputError(RWBError, ValueError):
    """Invalid arguments: shapes, marginals, budgets, parameters."""


class ParseError(InputError):
    """A measure or dataset file could not be read."""


class ConvergenceError(RWBError, RuntimeError):
    """An iterative solver hit its iteration cap.

    ``residual`` carries the last marginal residual or duality gap so the
    caller can decide whether the iterate is still usable.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class CapacityError(RWBError, RuntimeError):
    """The exact LP path was asked to solve an instance above its size guard."""


class RebuildStormError(ConvergenceError):
    """The free-support solver rebuilt its coreset too many times."""
