"""
Error hierarchy for IDD Monitor
Every error carries the process exit code the management commands report
"""
from typing import Optional


class IDDError(Exception):
    """Base error class"""
    exit_code = 2


class ConfigError(IDDError):
    """Invalid configuration or parameter value"""
    pass


class DimensionError(IDDError):
    """Shapes or dimensions of the inputs do not agree"""
    pass


class EmptyInputError(IDDError):
    """An operation received no measures or no points"""
    pass


class InsufficientSamplesError(IDDError):
    """Too few calibration batches for the requested fit"""
    pass


class DegenerateRowError(IDDError):
    """A coupling row carries no mass"""
    pass


class DegenerateVarianceError(IDDError):
    """Calibration fields have zero total variance"""
    pass


class OracleSizeError(IDDError):
    """Problem too large for exhaustive search"""
    pass


class ConvergenceError(IDDError):
    """Solver did not reach the marginal tolerance"""
    exit_code = 3

    def __init__(self, message: str, violation: float, t: Optional[int] = None):
        self.violation = violation
        self.t = t
        super().__init__(message)

    def at_time(self, t: int) -> 'ConvergenceError':
        return ConvergenceError(f"t={t}: {self.args[0]}", self.violation, t=t)


class BenchmarkPointError(IDDError):
    """A benchmark point could not be matched to its target ARL0"""
    exit_code = 4
