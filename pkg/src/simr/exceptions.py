"""Exception hierarchy shared across the package.

``DataError`` subclasses map to CLI exit code 2 (bad input), ``NumericalError``
subclasses to exit code 3 (estimation cannot proceed on this sample).
"""


class SimrError(Exception):
    """Base class for all package-specific errors."""


class DataError(SimrError):
    """Input data is unusable (parsing, schema, non-finite values)."""


class NonFiniteInput(DataError):
    """NaN or infinity found in predictors or response."""


class DataFileError(DataError):
    """A CSV file could not be parsed; message carries row/column context."""


class NumericalError(SimrError):
    """Estimation failed for numerical reasons on an otherwise valid input."""


class SingularCovariance(NumericalError):
    """Predictor sample covariance is numerically singular."""


class TooManySlices(NumericalError):
    """Requested slicing leaves an empty slice after tie adjustment."""


class DegenerateSlice(NumericalError):
    """A slice has too few observations for the requested computation."""


class RankDeficientOLS(NumericalError):
    """The least-squares design for residual-based pHd is singular."""


class DegenerateResample(NumericalError):
    """A bootstrap resample produced a singular covariance or bad slicing."""


class HypothesisOutOfRange(SimrError):
    """Dimension hypothesis outside 0..p."""


class ShapeMismatch(SimrError):
    """Inconsistent array shapes between related inputs."""
