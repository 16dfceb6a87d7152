"""Exception types shared across the library."""


class EsnAdjointError(Exception):
    """Base class for all library-specific failures."""


class InvalidStateError(EsnAdjointError, ValueError):
    """A state or parameter vector is non-finite or violates a domain bound."""


class ShapeError(EsnAdjointError, ValueError):
    """Array arguments have inconsistent dimensions."""


class IntegrationBlowupError(EsnAdjointError, FloatingPointError):
    """Time stepping produced a non-finite value.

    ``step`` is the index of the offending step when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConstructionError(EsnAdjointError, RuntimeError):
    """Reservoir construction failed (e.g. spectral radius estimation)."""


class NotTrainedError(EsnAdjointError, RuntimeError):
    """An operation requiring a trained readout was called before training."""


class IllConditionedTrainingError(EsnAdjointError, RuntimeError):
    """The ridge normal matrix is numerically singular; increase the regularizer."""


class InconsistentTrajectoryError(EsnAdjointError, ValueError):
    """Stored reservoir states are not consecutive outputs of the step map."""


class DivergedAdjointError(EsnAdjointError, FloatingPointError):
    """Adjoint variables exceeded the configured norm cap.

    Expected behaviour for windows much longer than a Lyapunov time.
    """

    def __init__(self, message, step=None, norm_ratio=None):
        super().__init__(message)
        self.step = step
        self.norm_ratio = norm_ratio


class DivergedTangentError(EsnAdjointError, FloatingPointError):
    """Tangent propagation overflowed."""


class DivergedAttractorError(EsnAdjointError, RuntimeError):
    """A closed-loop rollout left the attractor; a model-quality failure."""


class UnreliableEstimateError(EsnAdjointError, RuntimeError):
    """Too many ensemble members diverged; ``estimate`` holds partial results."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class SearchFailedError(EsnAdjointError, RuntimeError):
    """Every hyperparameter candidate was infeasible; ``history`` is attached."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
