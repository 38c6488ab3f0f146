"""Exception hierarchy for the vineshap package."""


class VineShapError(Exception):
    """Base class for all vineshap errors."""


class InvalidInputError(VineShapError):
    """Raised when an argument violates a documented precondition."""


class DataError(VineShapError):
    """Raised for malformed input files (bad cells, missing columns, ...)."""


class UnsupportedCoalitionError(VineShapError):
    """Raised when a coalition is not a prefix or suffix of the vine order."""


class UnsupportedBlockError(VineShapError):
    """Raised when a requested copula marginal is not a contiguous block."""


class CoverageError(VineShapError):
    """Raised when a cover plan does not serve a requested coalition."""


class NumericError(VineShapError):
    """Raised when a numeric procedure fails irrecoverably."""
