"""Exception types raised by addfit.

Plain ``ValueError``/``TypeError`` are used for ordinary argument mistakes;
the classes below mark conditions callers may want to handle individually
(parse failures, numerical breakdown, non-convergence).
"""


class AddfitError(Exception):
    """Base class for addfit-specific errors."""


class StructureError(AddfitError):
    """A model or parameter vector violates the additive-model structure."""


class SingularityError(AddfitError):
    """Evaluation at a pole (e.g. omega = 0 with poles at the origin)."""


class SingularFilterError(AddfitError):
    """A denominator polynomial vanishes on a grid frequency."""


class FrfParseError(AddfitError):
    """An FRF file does not conform to the documented CSV/JSON layout."""


class EmptyBandError(AddfitError):
    """Band selection removed every frequency point."""


class SingularWeightError(AddfitError):
    """Inverse-magnitude weighting hit a zero magnitude with no floor."""


class WeightContractError(AddfitError):
    """A weighting matrix is not Hermitian positive semidefinite."""


class ConditioningError(AddfitError):
    """A linear solve was abandoned because the system is numerically singular.

    Carries the offending condition number in ``condition_number``.
    """

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class DivergenceError(AddfitError):
    """The iterative estimator diverged.

    The per-iteration history up to the point of failure is attached as
    ``report`` (an :class:`addfit.estimator.EstimationReport`).
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
