"""
Exception hierarchy for IRS Link Lab.

Every error raised on purpose by the package derives from IRSLinkError and
from the builtin a caller would naturally catch (ValueError for bad inputs,
RuntimeError for failures during a computation).
"""

from typing import Optional


class IRSLinkError(Exception):
    """Base class for all package errors."""


class ConfigurationError(IRSLinkError, ValueError):
    """Invalid scenario or optimizer configuration."""


class GeometryError(IRSLinkError, ValueError):
    """Degenerate node placement (coincident points, non-finite coordinates)."""


class DomainError(IRSLinkError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class BarrierDomainError(DomainError):
    """Point outside the interior of the l_p barrier (‖ξ‖_p ≥ 1)."""


class ContractViolation(IRSLinkError, ValueError):
    """Caller broke an input contract, e.g. a non unit-modulus phase vector."""


class EstimationFailure(IRSLinkError, RuntimeError):
    """Angle estimate left the physical disk; the trial is unusable."""


class NumericalError(IRSLinkError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message: str, last_rayleigh: Optional[float] = None):
        super().__init__(message)
        self.last_rayleigh = last_rayleigh
