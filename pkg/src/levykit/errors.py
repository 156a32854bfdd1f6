"""Exception types raised by levykit."""


class LevykitError(Exception):
    """Base class for all levykit errors."""


class ValidationError(LevykitError):
    pass


class NonIntegrableKernel(ValidationError):
    pass


class SymmetryViolation(ValidationError):
    pass


class QuadratureNotConverged(LevykitError):
    pass


class DivergentTail(LevykitError):
    pass


class SingularityNotResolved(LevykitError):
    pass


class EvaluationAtOrigin(LevykitError):
    pass


class GridTooCoarse(LevykitError):
    pass


class EnvelopeViolated(LevykitError):
    pass


class StateOverflow(LevykitError):
    pass


class DisjointnessViolated(LevykitError):
    pass


class EstimatorError(LevykitError):
    """Monte Carlo estimator could not produce a trustworthy value."""


class TruncationDominant(EstimatorError):
    pass


class DegenerateHarmonic(EstimatorError):
    pass


class FitRejected(EstimatorError):
    pass


class NoStabilization(EstimatorError):
    pass


class ChainNotRegenerating(EstimatorError):
    pass


class BinningTooCoarse(EstimatorError):
    pass


class TailDivergent(LevykitError):
    pass


class SingularSystem(LevykitError):
    pass


class ResidualTooLarge(LevykitError):
    pass


class ComparisonViolated(LevykitError):
    pass
