"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/IO problems exit 2,
assumption violations exit 3, numerical failures exit 4.
"""


class AugPdgdError(Exception):
    """Base class for all package errors."""


class DimensionError(AugPdgdError):
    """Inputs whose shapes do not match the problem dimensions."""


class AssumptionViolationError(AugPdgdError):
    """A structural assumption needed for certification does not hold."""


class ActiveSetClassificationError(AssumptionViolationError):
    """A constraint labelled inactive is not strictly negative at the optimum."""


class GenerationError(AugPdgdError):
    """Random problem generation failed to produce a regular instance."""


class ConvergenceTimeoutError(AugPdgdError):
    """Flow integration hit the time budget before reaching tolerance.

    Carries the best iterate seen so far in ``best_point`` and the
    residual achieved in ``best_residual``.
    """

    def __init__(self, message, best_point=None, best_residual=None):
        super().__init__(message)
        self.best_point = best_point
        self.best_residual = best_residual


class DivergenceError(AugPdgdError):
    """The integrated state left the set of finite floating-point vectors.

    ``last_time``/``last_state`` hold the final finite sample.
    """

    def __init__(self, message, last_time=None, last_state=None):
        super().__init__(message)
        self.last_time = last_time
        self.last_state = last_state


class StiffnessError(AugPdgdError):
    """Adaptive step control underflowed the minimum step size."""


class CertificateInvalidError(AugPdgdError):
    """The assembled Lyapunov matrix is not positive definite."""
