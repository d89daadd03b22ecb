"""Exception hierarchy shared by all modules."""


class EdgeCurrentError(Exception):
    """Base class for library errors."""


class InvalidArgument(EdgeCurrentError, ValueError):
    pass


class NumericalFailure(EdgeCurrentError, ArithmeticError):
    pass


class SimplicityViolation(NumericalFailure):
    """Two computed eigenvalues of one fiber are numerically degenerate."""


class MonotonicityViolation(NumericalFailure):
    pass


class UnsupportedFamily(InvalidArgument):
    pass


class UnsupportedPerturbation(InvalidArgument):
    pass


class HypothesisViolation(InvalidArgument):
    pass


class TruncationFailure(NumericalFailure):
    pass


class CrossTermRisk(EdgeCurrentError):
    """Current requested for a multi-level packet without a disjointness check."""


class EmptyWindow(EdgeCurrentError):
    pass


class StabilityFailure(EdgeCurrentError):
    """kappa^2 <= 0: the perturbation is too large for the chosen windows."""


class CoverageInsufficient(InvalidArgument):
    pass
