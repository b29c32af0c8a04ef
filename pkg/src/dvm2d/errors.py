"""Exception hierarchy shared across the package.

PreconditionError maps to CLI exit code 2, NumericalError and its
subclasses to exit code 3.
"""


class PreconditionError(ValueError):
    """An argument violates an operation's stated precondition."""


class NumericalError(RuntimeError):
    """A computation failed on numerical grounds."""


class QuadratureError(NumericalError):
    """Quadrature self-convergence check failed."""


class PositivityLossError(NumericalError):
    """Time integration drove the distribution negative; dt too large."""
