"""Exception types raised across the package."""


class CensCovError(Exception):
    """Base class for all model errors."""


class DimensionMismatch(CensCovError, ValueError):
    pass


class NoEvents(CensCovError):
    """No uncensored observation is available to anchor the survival fit."""


class SingularInformation(CensCovError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class NotConverged(CensCovError):
    pass


class DegenerateTail(CensCovError):
    """The baseline never drops below one, so a parametric tie-in is undefined."""


class NonConvergence(CensCovError):
    """The constrained Weibull likelihood search failed."""


class OutOfRange(CensCovError, ValueError):
    pass


class Divergent(CensCovError):
    """The requested integral is infinite (carry-forward tail on an unbounded range)."""


class ZeroSurvival(CensCovError):
    """``S(w | z) = 0`` so the conditional mean is undefined."""


class RankDeficient(CensCovError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class TooFewRows(CensCovError):
    pass


class ScenarioFailed(CensCovError):
    pass


class InvalidDates(CensCovError, ValueError):
    pass


class MissingCovariate(CensCovError, KeyError):
    pass


class TrialSizeError(CensCovError, ValueError):
    """More trial places requested than there are candidates."""
