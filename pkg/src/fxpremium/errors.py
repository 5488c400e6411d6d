"""Exception hierarchy.

Data problems (bad input files, horizons that do not fit the data) derive from
``DataError``; estimation problems derive from ``FitError``. The CLI maps the
two families to distinct exit codes.
"""


class FxPremiumError(Exception):
    """Base class for all package errors."""


class DataError(FxPremiumError, ValueError):
    pass


class MissingColumn(DataError):
    pass


class NonPositiveSpot(DataError):
    pass


class UnsortedDates(DataError):
    pass


class UnparseableRow(DataError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class HorizonTooLong(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class FitError(FxPremiumError, ValueError):
    pass


class InsufficientData(FitError):
    pass


class NonStationaryFit(FitError):
    pass


class DegenerateSeries(FitError):
    pass


class ForecastError(FxPremiumError, ValueError):
    pass


class InvalidLevel(ForecastError):
    pass


class NonPositivePrice(ForecastError):
    pass


class DegenerateDistribution(ForecastError):
    pass


class LengthMismatch(FxPremiumError, ValueError):
    pass


class EmptyInput(FxPremiumError, ValueError):
    pass
