"""Exception types shared across the toolkit."""


class FracliftError(Exception):
    """Base class for all toolkit errors."""


class SizeLimitError(FracliftError):
    """A requested construction exceeds the configured size cap."""


class StructureError(FracliftError):
    """The input object violates a structural requirement (e.g. disconnected graph)."""


class NumericalError(FracliftError):
    """An iterative numerical routine failed to converge.

    Carries optional diagnostics: ``index`` (offending eigenvalue index)
    and ``residual`` (last residual of an iterative solve).
    """

    def __init__(self, message, index=None, residual=None):
        super().__init__(message)
        self.index = index
        self.residual = residual


class QuadratureError(FracliftError):
    """An improper-integral truncation misses its tail tolerance.

    ``defect`` is the estimated neglected tail mass.
    """

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class ResolutionError(FracliftError):
    """A grid is too coarse to extract the requested quantity."""


class WindowError(FracliftError):
    """A requested fitting window lies outside the spectrum-resolved range."""


class CacheError(FracliftError):
    """A cache file is malformed or fails its integrity check."""
