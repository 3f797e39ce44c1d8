"""Exception types raised by qsmooth."""


class QsmoothError(Exception):
    """Base class for all library errors."""


class ValidationError(QsmoothError, ValueError):
    """An input does not satisfy the invariants of its type."""


class ConfigError(QsmoothError, ValueError):
    """Bad scenario, grid or solver configuration."""


class NumericalError(QsmoothError, ArithmeticError):
    """Base for failures that arise while integrating or solving."""


class ImpossibleJumpError(NumericalError):
    """A jump was requested whose probability is zero."""


class DegenerateEffectError(NumericalError):
    """An effect update produced the zero operator."""


class InconsistentRecordError(NumericalError):
    """A filtered/retrofiltered pair assigns zero probability to the record."""


class IntegratorStepError(NumericalError):
    """A step left the set of valid states (usually dt too large)."""


class PreconditionError(QsmoothError, ValueError):
    """A documented precondition of an estimator does not hold."""


class SolverError(NumericalError):
    """Least-squares solve did not converge.

    Attributes
    ----------
    best_x : numpy.ndarray
        Best parameter vector found.
    best_residual : float
        Residual norm at ``best_x``.
    """

    def __init__(self, message, best_x=None, best_residual=None):
        super().__init__(message)
        self.best_x = best_x
        self.best_residual = best_residual
