"""Exception types shared across the library."""


class CalikdError(Exception):
    """Base class for all library errors."""


class InvalidInputError(CalikdError):
    """Input values violate a documented precondition (non-finite, bad range...)."""


class InvalidTemperatureError(CalikdError):
    """Temperature is not a positive finite scalar."""


class ShapeError(CalikdError):
    """Array shapes are inconsistent with each other or with the operation."""


class InvalidBinsError(CalikdError):
    """Bin count is out of range for the requested binning scheme."""


class FitDivergedError(CalikdError):
    """A calibrator fit produced non-finite parameters or gradients."""


class NumericalError(CalikdError):
    """A numeric computation produced non-finite values.

    When raised from a training loop, ``last_model`` and ``log`` hold the
    most recent finite checkpoint and the partial training log.
    """

    def __init__(self, message, last_model=None, log=None):
        super().__init__(message)
        self.last_model = last_model
        self.log = log


class DegenerateSeriesError(CalikdError):
    """A correlation statistic is undefined (constant series, too few points)."""
