"""
Base exception hierarchy for carbospec.

The three families map one-to-one onto the command-line exit codes:
ValidationError -> 2, StorageError -> 3, NumericalDivergenceError -> 4.
"""


class CarbospecError(Exception):
    """Base exception for all carbospec errors."""
    pass


class ValidationError(CarbospecError, ValueError):
    """Input data, parameters or files failed validation."""
    pass


class StorageError(CarbospecError, OSError):
    """A file could not be read or written."""
    pass


class NumericalDivergenceError(CarbospecError, ArithmeticError):
    """A numerical procedure produced non-finite values."""
    pass


class LengthMismatchError(ValidationError):
    """Two paired inputs differ in length."""
    pass


class InvalidParamsError(ValidationError):
    """A parameter lies outside its valid range."""
    pass


class ConstantSpectrumError(ValidationError):
    """A spectrum has no spread (max == min) and cannot be rescaled."""
    pass


class WidthMismatchError(ValidationError):
    """Feature width differs from the width a model was trained on."""
    pass


class GridMismatchError(ValidationError):
    """Spectra are not on the expected wavelength grid."""
    pass
