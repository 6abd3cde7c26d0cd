"""Exception types shared across the package."""


class DickeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(DickeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SingularSurfaceError(DomainError):
    """Evaluation requested at a point where a projected trial state has zero norm."""


class ContractError(DickeError, ValueError):
    """Two objects that must belong together (basis, parameters, states) do not."""


class ConvergenceError(DickeError, RuntimeError):
    """An iterative solver failed to converge.

    ``best`` carries the best candidate found so far (solver dependent),
    so callers can inspect how close the run got.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ResourceLimitError(DickeError, RuntimeError):
    """A resource ladder (e.g. Fock-space truncation) was exhausted."""


class ConfigError(DickeError, ValueError):
    """A configuration file or option set failed validation."""
