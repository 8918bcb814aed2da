"""Exception hierarchy for driftmon."""


class DriftmonError(Exception):
    """Base class for all driftmon errors."""


class ConfigError(DriftmonError):
    """Invalid configuration: bad parameters, mismatched components."""


class InputError(DriftmonError):
    """Invalid data fed to an operation: non-finite values, wrong shape."""


class CalibrationError(DriftmonError):
    """Monte Carlo calibration could not produce a usable result."""


class FormatError(DriftmonError):
    """A persisted artifact or CSV row could not be parsed."""


class NumericError(DriftmonError):
    """A numerical procedure failed (e.g. singular covariance)."""
