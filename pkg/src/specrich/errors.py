"""Exception hierarchy shared by all specrich modules."""


class SpecrichError(Exception):
    """Base class for every error raised by specrich."""


class DataError(SpecrichError, ValueError):
    """Input contains non-finite or otherwise invalid values."""


class ShapeError(SpecrichError, ValueError):
    """Array dimensions do not agree."""


class ParameterError(SpecrichError, ValueError):
    """A hyperparameter or count is out of its valid range."""


class CoverageError(SpecrichError, ValueError):
    """A target band center lies outside the source grid."""


class AmbiguousBandError(SpecrichError, ValueError):
    """A removal wavelength matches zero or several grid centers."""


class DegenerateSpectrumError(SpecrichError, ValueError):
    """A spectrum has (near) zero mean and cannot be normalized."""


class DegenerateTargetError(SpecrichError, ValueError):
    """The regression target is constant."""


class RankError(SpecrichError, ValueError):
    """More components requested than the data rank supports."""


class NumericalError(SpecrichError, ArithmeticError):
    """A factorization or normalization failed numerically."""


class InsufficientDataError(SpecrichError, ValueError):
    """Too few samples for the requested operation."""


class UndefinedCorrelationError(SpecrichError, ValueError):
    """Pearson correlation is undefined because an input is constant."""


class SearchFailureError(SpecrichError, RuntimeError):
    """Every point of a hyperparameter grid failed."""


class CvFitError(SpecrichError, RuntimeError):
    """A fit inside cross validation failed; carries the repetition and round."""

    def __init__(self, message, repetition=None, round=None):
        super().__init__(message)
        self.repetition = repetition
        self.round = round
