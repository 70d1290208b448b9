"""Exception types shared across the package."""


class SchemaError(ValueError):
    """Raised when an input file or table violates its documented schema."""


class DesignError(ValueError):
    """Raised when a design matrix cannot be assembled as requested."""


class SingularDesignError(DesignError):
    """Raised when a design (or its correlation matrix) is rank deficient.

    ``terms`` names the term(s) implicated in the linear dependency, when
    they can be identified.
    """

    def __init__(self, message, terms=()):
        super().__init__(message)
        self.terms = tuple(terms)


class ConvergenceError(RuntimeError):
    """Raised when an iterative fit fails to converge.

    Carries the iteration trace so callers can report or inspect it.
    """

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite intermediates."""
