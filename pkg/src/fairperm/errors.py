"""Exception hierarchy shared by every module."""

from __future__ import annotations


class FairPermError(Exception):
    """Base class for all errors raised by the package."""


class EmptyConditioningClass(FairPermError):
    """A label-conditional metric was requested on a group lacking that class."""


class DegenerateVariance(FairPermError):
    """A variance estimate is zero (or undefined), so studentization is impossible."""


class InsufficientData(FairPermError):
    """Too few records for the requested estimator."""


class DegenerateData(FairPermError):
    """The redraw cap was exhausted while resampling."""


class MetricUndefinedOnResample(FairPermError):
    """A bootstrap resample or permutation replicate lost a required class."""


# Same condition, named for the permutation path.
MetricUndefinedOnReplicate = MetricUndefinedOnResample


class InvalidScheme(FairPermError):
    """The permutation scheme does not fit the data."""


class TooManySplits(FairPermError):
    """Exhaustive enumeration would exceed the configured cap."""


class InsufficientTrials(FairPermError):
    """Every permutation trial failed to produce a usable statistic."""


class InvalidConfiguration(FairPermError):
    """Incompatible options (e.g. closed-form studentization for precision)."""


class DataError(FairPermError):
    """Base class for CSV ingestion errors."""


class MissingColumn(DataError):
    def __init__(self, column: str):
        super().__init__(f"missing column: {column!r}")
        self.column = column


class UnparsableValue(DataError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")
        self.row = row
        self.column = column
        self.value = value


class GroupNotFound(DataError):
    def __init__(self, group: str):
        super().__init__(f"group value {group!r} not present in the data")
        self.group = group


class EmptyGroup(DataError):
    def __init__(self, group: str):
        super().__init__(f"group {group!r} has no usable rows")
        self.group = group
