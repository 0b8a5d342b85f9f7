"""Exception hierarchy.

Data problems (bad input, malformed files, impossible requests) derive from
:class:`DataError`; numerical failures (singular systems, infeasible or
non-converged solves) derive from :class:`NumericalError`.  The CLI maps the
two families onto distinct exit codes.
"""


class ToothSparseError(Exception):
    """Base class for every error raised by this package."""


class DataError(ToothSparseError, ValueError):
    """Input data violates a contract."""


class DegenerateInputError(DataError):
    """Point configuration is too degenerate for the requested operation."""


class NoSupportError(DataError):
    """No adjacent teeth are available to predict from."""


class FormatError(DataError):
    """A file does not follow its declared format."""


class ChecksumError(FormatError):
    pass


class NumericalError(ToothSparseError, ArithmeticError):
    """A numerical procedure failed."""


class SingularSystemError(NumericalError):
    def __init__(self, message, regularization):
        super().__init__(f"{message} (regularization in effect: {regularization:.6g})")
        self.regularization = regularization


class InfeasibleError(NumericalError):
    """The l1 problem has no solution within the requested tolerance."""

    def __init__(self, epsilon, ls_residual):
        super().__init__(
            f"no coefficients reach residual <= {epsilon:.6g}; "
            f"least-squares residual is {ls_residual:.6g}"
        )
        self.epsilon = epsilon
        self.ls_residual = ls_residual
