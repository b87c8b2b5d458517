"""Exception types shared across the package."""

from __future__ import annotations


class CalibrationError(Exception):
    """Base class for every error raised by bregcal."""


class DomainError(CalibrationError, ValueError):
    """An argument fell outside the open domain of a generator function."""

    def __init__(self, value, interval, what="argument", index=None):
        self.value = value
        self.interval = tuple(interval)
        self.index = index
        where = f" at unit {index}" if index is not None else ""
        super().__init__(
            f"{what} {value!r}{where} is outside the open interval "
            f"({interval[0]}, {interval[1]})")


class MaxIterationsError(CalibrationError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleError(CalibrationError):
    """The calibration constraints appear to have no solution in the domain."""

    def __init__(self, message, imbalance=None, result=None):
        super().__init__(message)
        self.imbalance = imbalance
        self.result = result


class SingularFitError(CalibrationError):
    pass


class DegenerateFoldError(CalibrationError):
    pass


class UnsupportedWithoutFrame(CalibrationError):
    """A population frame (unit-level auxiliaries) is required but missing."""
