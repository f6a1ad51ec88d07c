"""Custom exception classes for aci-cir"""

from typing import Optional


class AciError(Exception):
    """Base exception for aci-cir"""
    pass


class ValidationError(AciError):
    """Invalid argument, shape or index set"""
    pass


class ConfigurationError(AciError):
    """Configuration error"""
    pass


class GramCouplingError(ConfigurationError):
    """Exact-limit conditioning requested on coupled observation noise blocks"""
    pass


class NumericalError(AciError):
    """Nonfinite or otherwise unusable numerical result"""

    def __init__(self, message: str, index: Optional[int] = None, time: Optional[float] = None):
        super().__init__(message)
        self.index = index
        self.time = time


class BlowupError(NumericalError):
    """Integration or filter update produced nonfinite values"""
    pass


class DegenerateReferenceError(NumericalError):
    """Reference covariance of a relative entropy is not positive definite"""
    pass


class BankIndexError(AciError):
    """Smoother bank advanced out of order"""
    pass
