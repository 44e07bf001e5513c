"""Exception hierarchy shared across the package.

Each error class maps to a distinct CLI exit code (see cli.EXIT_CODES).
"""


class ClsketchError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ClsketchError):
    """Invalid construction arguments (bad dimensions, counts, scales)."""


class ShapeError(ClsketchError):
    """Array shape or length mismatch between related arguments."""


class DegenerateDensityError(ClsketchError):
    """Density sketch has (numerically) zero norm; alpha is undefined."""


class DivergenceError(ClsketchError):
    """Non-finite loss or parameters encountered during iteration."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FingerprintMismatchError(ClsketchError):
    """Sketches/models built from incompatible frequency sets were mixed."""


class IndependenceError(ClsketchError):
    """The two grids of the unbiased direction share a seed."""


class FileFormatError(ClsketchError):
    """Bad magic, version, header or truncated payload in a data file."""
