"""
errors.py - Exception types shared by the library and the CLI

Every error raised on purpose derives from VanishingDepthError, and also
from the builtin it behaves like, so callers can catch either one.
"""


class VanishingDepthError(Exception):
    """Base class for all library errors."""


class ContractViolation(VanishingDepthError, ValueError):
    """Caller broke a precondition (shapes, geometry, parameter ranges)."""


class DomainError(VanishingDepthError, ValueError):
    """Math outside its domain, e.g. log of a nonpositive value."""


class FormatError(VanishingDepthError, ValueError):
    """Input file or vector is not in the expected format."""


class DepthRangeError(VanishingDepthError, ValueError):
    """Value does not fit the storage range (u16 millimeters, digit slots)."""


class EmptySetError(VanishingDepthError, ValueError):
    """Statistic or loss requested over an empty pixel set."""


class DegenerateInputError(VanishingDepthError, ValueError):
    """Input has no spread where a transform needs one (constant depth)."""


class TrainingDivergence(VanishingDepthError, RuntimeError):
    """Loss became non-finite. `diagnostics` holds what we knew at the time."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
